//! Convolution layers bound to named entries of a [`ParamStore`].

use crate::engine::conv::ConvGeom;
use crate::engine::{Element, Graph, Initializer, ParamStore, Var};
use crate::error::Result;

/// Shape summary of one executed convolution, used for accounting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[kt, kh, kw]`; `kt = 1` for 2D layers.
    pub kernel: [usize; 3],
    /// `[To, Ho, Wo]`; `To = 1` for 2D layers.
    pub output: [usize; 3],
}

impl ConvSpec {
    /// Weights plus one bias per output channel.
    pub fn params(&self) -> u64 {
        let k: usize = self.kernel.iter().product();
        (k * self.in_channels * self.out_channels + self.out_channels) as u64
    }

    /// `2 · kt·kh·kw · Cin · Cout · To·Ho·Wo`.
    pub fn flops(&self) -> u64 {
        let k: usize = self.kernel.iter().product();
        let positions: usize = self.output.iter().product();
        2 * (k * self.in_channels * self.out_channels * positions) as u64
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    /// Stride 1 with `kernel / 2` zero padding, preserving spatial size.
    pub fn same(name: impl Into<String>, in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
        }
    }

    pub fn strided(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        Self {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        let k = self.kernel;
        store.insert(
            self.weight_name(),
            init.weight(&[self.out_channels, self.in_channels, k, k]),
        )?;
        store.insert(self.bias_name(), init.bias(&[self.out_channels]))
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let w = g.param(store, &self.weight_name())?;
        let b = g.param(store, &self.bias_name())?;
        g.conv2d(x, w, Some(b), self.stride, self.padding)
    }

    /// Output extent for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let geom = self.geom(h, w)?;
        Ok((geom.output[1], geom.output[2]))
    }

    fn geom(&self, h: usize, w: usize) -> Result<ConvGeom> {
        ConvGeom::new(
            &[1, self.in_channels, 1, h, w],
            &[self.out_channels, self.in_channels, 1, self.kernel, self.kernel],
            [1, self.stride, self.stride],
            [0, self.padding, self.padding],
        )
    }

    pub fn spec(&self, h: usize, w: usize) -> Result<ConvSpec> {
        let geom = self.geom(h, w)?;
        Ok(ConvSpec {
            name: self.name.clone(),
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: [1, self.kernel, self.kernel],
            output: geom.output,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Conv3d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3d {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init<E: Element>(&self, store: &mut ParamStore<E>, init: &mut Initializer) -> Result<()> {
        let [kt, kh, kw] = self.kernel;
        store.insert(
            self.weight_name(),
            init.weight(&[self.out_channels, self.in_channels, kt, kh, kw]),
        )?;
        store.insert(self.bias_name(), init.bias(&[self.out_channels]))
    }

    pub fn forward<E: Element>(&self, g: &mut Graph<E>, store: &ParamStore<E>, x: Var) -> Result<Var> {
        let w = g.param(store, &self.weight_name())?;
        let b = g.param(store, &self.bias_name())?;
        g.conv3d(x, w, Some(b), self.stride, self.padding)
    }

    pub fn spec(&self, t: usize, h: usize, w: usize) -> Result<ConvSpec> {
        let [kt, kh, kw] = self.kernel;
        let geom = ConvGeom::new(
            &[1, self.in_channels, t, h, w],
            &[self.out_channels, self.in_channels, kt, kh, kw],
            self.stride,
            self.padding,
        )?;
        Ok(ConvSpec {
            name: self.name.clone(),
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            output: geom.output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_param_count() {
        let spec = Conv2d::same("c", 3, 16, 3).spec(8, 8).unwrap();
        assert_eq!(spec.params(), 3 * 3 * 3 * 16 + 16);
        assert_eq!(spec.params(), 448);
    }

    #[test]
    fn single_conv_flops_by_hand() {
        // 3×3 kernel, 3→16 channels, 8×8 output: 2·9·3·16·64.
        let spec = Conv2d::same("c", 3, 16, 3).spec(8, 8).unwrap();
        assert_eq!(spec.flops(), 2 * 9 * 3 * 16 * 64);
        assert_eq!(spec.flops(), 55_296);
    }
}
