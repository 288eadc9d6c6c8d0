mod common;

use common::{random_window, tiny_model};
use estinet::engine::{Graph, Tensor};
use estinet::estm::{Estm, EstmConfig};
use estinet::model::{Estinet, Variant};
use estinet::verify::randomize;

#[test]
fn sicm_features_keep_frame_size_and_reach_one_sixteenth() {
    let model = Estinet::new(tiny_model(Variant::Full)).unwrap();
    let store = model.init::<f64>(0).unwrap();
    for (h, w) in [(32, 32), (48, 64), (64, 16)] {
        let mut g = Graph::new();
        let frame = random_window(&mut g, 1, h, w, 1)[0];
        let (features, trace) = model.sicm().forward_traced(&mut g, &store, frame).unwrap();
        assert_eq!(trace.deepest[2..], [h / 16, w / 16]);
        let scales: Vec<usize> = trace.encoder_shapes.iter().map(|s| h / s[2]).collect();
        assert_eq!(scales, [2, 4, 8, 16]);
        assert_eq!(g.shape(features), &[1, 2, h, w]);
    }
}

#[test]
fn sicm_rejects_sizes_not_divisible_by_sixteen() {
    let model = Estinet::new(tiny_model(Variant::Full)).unwrap();
    let store = model.init::<f64>(0).unwrap();
    let mut g = Graph::new();
    let frame = random_window(&mut g, 1, 30, 32, 1)[0];
    assert!(model.sicm().forward(&mut g, &store, frame).is_err());
}

#[test]
fn refiner_collapses_any_odd_window_to_one_step() {
    for window in [3, 5, 7] {
        let config = EstmConfig {
            window,
            width: 2,
            rdb_count: 1,
            rdb_layers: 1,
            growth: 2,
        };
        let estm = Estm::new(config).unwrap();
        let store = {
            let mut s = estinet::engine::ParamStore::new(0);
            estm.init(&mut s, &mut estinet::engine::Initializer::new(0)).unwrap();
            s
        };
        let mut g = Graph::<f64>::new();
        let coarse = random_window(&mut g, window, 16, 16, 2);
        let rainy = random_window(&mut g, window, 16, 16, 3);
        let (out, trace) = estm.forward_traced(&mut g, &store, &coarse, &rainy).unwrap();
        assert_eq!(trace.temporal_extents, [window, window.div_ceil(2), 1]);
        assert_eq!(g.shape(out), &[1, 3, 16, 16]);
    }
}

#[test]
fn zero_parameters_pass_the_rainy_center_through() {
    for variant in [Variant::Full, Variant::ConvLstm, Variant::BConvLstm, Variant::Estm2dcnn] {
        let model = Estinet::new(tiny_model(variant)).unwrap();
        let mut store = model.init::<f64>(0).unwrap();
        store.zero_values();
        let mut g = Graph::new();
        let rainy = random_window(&mut g, model.window(), 16, 32, 4);
        let out = model.forward(&mut g, &store, &rainy).unwrap();
        assert_eq!(g.value(out.refined), g.value(rainy[model.center()]), "{variant}");
    }
}

#[test]
fn outputs_have_one_frame_per_input_and_are_finite() {
    for variant in [
        "full",
        "sicm_2dcnn",
        "convlstm",
        "b_convlstm",
        "stim_n(2)",
        "stim_n(4)",
        "estm_2dcnn",
    ] {
        let model = Estinet::new(tiny_model(variant.parse().unwrap())).unwrap();
        let mut store = model.init::<f64>(1).unwrap();
        randomize(&mut store, 5);
        let mut g = Graph::new();
        let rainy = random_window(&mut g, model.window(), 16, 16, 6);
        let out = model.forward(&mut g, &store, &rainy).unwrap();
        assert_eq!(out.coarse.len(), model.window());
        for &v in out.coarse.iter().chain([&out.refined]) {
            assert_eq!(g.shape(v), &[1, 3, 16, 16]);
            assert!(g.value(v).all_finite());
        }
    }
}

#[test]
fn window_of_wrong_length_is_rejected() {
    let model = Estinet::new(tiny_model(Variant::Full)).unwrap();
    let store = model.init::<f32>(0).unwrap();
    let mut g = Graph::new();
    let rainy = random_window(&mut g, 4, 16, 16, 1);
    assert!(model.forward(&mut g, &store, &rainy).is_err());
}

#[test]
fn gate_activations_stay_strictly_inside_unit_interval() {
    let model = Estinet::new(tiny_model(Variant::Full)).unwrap();
    let mut store = model.init::<f64>(0).unwrap();
    randomize(&mut store, 11);
    let mut g = Graph::new();
    let rainy = random_window(&mut g, 5, 16, 16, 12);
    let out = model.forward(&mut g, &store, &rainy).unwrap();
    let stim = out.stim.unwrap();
    assert_eq!(stim.gates.len(), 10);
    for gates in &stim.gates {
        for v in [gates.forget, gates.input, gates.output] {
            assert!(g.value(v).data().iter().all(|&x| x > 0.0 && x < 1.0));
        }
    }
}

#[test]
fn batched_window_matches_separate_windows() {
    let model = Estinet::new(tiny_model(Variant::Full)).unwrap();
    let mut store = model.init::<f64>(0).unwrap();
    randomize(&mut store, 2);
    let mut g = Graph::new();
    let a = random_window(&mut g, 5, 16, 16, 20);
    let b = random_window(&mut g, 5, 16, 16, 21);
    let ra = model.forward(&mut g, &store, &a).unwrap().refined;
    let rb = model.forward(&mut g, &store, &b).unwrap().refined;
    let joined: Vec<_> = a.iter().zip(&b).map(|(&x, &y)| g.concat(&[x, y], 0).unwrap()).collect();
    let rj = model.forward(&mut g, &store, &joined).unwrap().refined;
    let expect = Tensor::from_vec([2, 3, 16, 16], [g.value(ra).data(), g.value(rb).data()].concat()).unwrap();
    assert!(g.value(rj).max_abs_diff(&expect).unwrap() < 1e-12);
}
