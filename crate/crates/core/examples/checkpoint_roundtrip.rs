//! Saves a checkpoint, reloads it bit-exactly and shows that a single
//! flipped byte is rejected.
//!
//! cargo run --example checkpoint_roundtrip

use estinet::trainer::{initial_checkpoint, Checkpoint, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = TrainConfig {
        seed: 42,
        ..Default::default()
    };
    let checkpoint = initial_checkpoint(&config)?;
    let dir = tempdir()?;
    let path = dir.join("model.ckpt");
    checkpoint.save(&path)?;
    let bytes = std::fs::read(&path)?;
    println!("saved {} parameters in {} bytes", checkpoint.param_count(), bytes.len());

    let reloaded = Checkpoint::load(&path)?;
    println!("reload is bit-exact: {}", reloaded.to_bytes() == bytes);
    let again = initial_checkpoint(&config)?;
    println!("same seed gives identical bytes: {}", again.to_bytes() == bytes);

    let mut corrupted = bytes.clone();
    let middle = corrupted.len() / 2;
    corrupted[middle] ^= 0x10;
    match Checkpoint::from_bytes(&corrupted) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("corrupted copy rejected: {e}"),
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempdir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("estinet_ckpt_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
