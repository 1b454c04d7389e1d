//! Exact parameter and multiply-accumulate accounting.
//!
//! Every convolution and linear layer carries a bias. FLOPs are twice the
//! MACs; normalization, bias and activation arithmetic are not counted.

use super::{BlockKey, BlockKind, SubnetArch};
use serde::{Deserialize, Serialize};

/// Head layout of the self-attention blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionShape {
    pub heads: u32,
    /// Per-head query/key dimension.
    pub key_dim: u32,
}

impl Default for AttentionShape {
    fn default() -> Self {
        AttentionShape {
            heads: 8,
            key_dim: 16,
        }
    }
}

impl AttentionShape {
    /// Total query (and key) width.
    pub fn qk_dim(&self) -> u64 {
        u64::from(self.heads) * u64::from(self.key_dim)
    }

    /// Total value width at expansion `e`.
    pub fn v_dim(&self, e: u32) -> u64 {
        self.qk_dim() * u64::from(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    /// Dense KxK convolution with K > 1.
    DenseConv,
    Pointwise,
    Depthwise,
    Linear,
    /// Token-by-token products inside attention (no weights).
    AttentionMatmul,
}

/// One weight layer (or weightless attention product) of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub params: u64,
    pub macs: u64,
    /// Elements read from the input feature map(s).
    pub input_elems: u64,
    /// Elements written to the output feature map.
    pub output_elems: u64,
    /// Part of a self-attention computation.
    pub attention: bool,
}

/// Layer-level breakdown of one block.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCost {
    pub layers: Vec<Layer>,
    /// Elements passed through the block's nonlinear activation.
    pub activation_elems: u64,
    /// Elements normalized by attention softmax.
    pub softmax_elems: u64,
}

impl BlockCost {
    pub fn params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn flops(&self) -> u64 {
        2 * self.macs()
    }

    /// Sum of the MACs of all layers of one kind.
    pub fn macs_of(&self, kind: LayerKind) -> u64 {
        self.layers
            .iter()
            .filter(|l| l.kind == kind)
            .map(|l| l.macs)
            .sum()
    }
}

fn conv(cin: u64, cout: u64, k: u64, res: u64, depthwise: bool, in_res: u64) -> Layer {
    let (params, macs, kind) = if depthwise {
        debug_assert_eq!(cin, cout);
        (
            cout * k * k + cout,
            res * res * k * k * cout,
            LayerKind::Depthwise,
        )
    } else {
        let kind = if k == 1 {
            LayerKind::Pointwise
        } else {
            LayerKind::DenseConv
        };
        (
            k * k * cin * cout + cout,
            res * res * k * k * cin * cout,
            kind,
        )
    };
    Layer {
        kind,
        params,
        macs,
        input_elems: in_res * in_res * cin,
        output_elems: res * res * cout,
        attention: false,
    }
}

fn linear(tokens: u64, cin: u64, cout: u64) -> Layer {
    Layer {
        kind: LayerKind::Linear,
        params: cin * cout + cout,
        macs: tokens * cin * cout,
        input_elems: tokens * cin,
        output_elems: tokens * cout,
        attention: false,
    }
}

fn attention(cost: &mut BlockCost, c: u64, e: u32, res: u64, shape: AttentionShape) {
    let n = res * res;
    let qk = shape.qk_dim();
    let v = shape.v_dim(e);
    let heads = u64::from(shape.heads);
    let proj = |cin, cout| Layer {
        attention: true,
        ..linear(n, cin, cout)
    };
    cost.layers.push(proj(c, qk));
    cost.layers.push(proj(c, qk));
    cost.layers.push(proj(c, v));
    cost.layers.push(Layer {
        kind: LayerKind::AttentionMatmul,
        params: 0,
        macs: n * n * qk,
        input_elems: 2 * n * qk,
        output_elems: heads * n * n,
        attention: true,
    });
    cost.layers.push(Layer {
        kind: LayerKind::AttentionMatmul,
        params: 0,
        macs: n * n * v,
        input_elems: heads * n * n + n * v,
        output_elems: n * v,
        attention: true,
    });
    cost.layers.push(proj(v, c));
    cost.activation_elems += n * v;
    cost.softmax_elems += heads * n * n;
}

/// Layer breakdown of one block under the given attention layout.
pub fn block_cost(key: &BlockKey, shape: AttentionShape) -> BlockCost {
    let cin = u64::from(key.in_width);
    let cout = u64::from(key.out_width);
    let r = u64::from(key.resolution);
    let e = u64::from(key.expansion.unwrap_or(1));
    let k = u64::from(key.kernel.unwrap_or(1));
    let mut cost = BlockCost::default();
    match key.kind {
        BlockKind::Stem => {
            let mid = cout.div_ceil(2);
            cost.layers.push(conv(cin, mid, 3, 2 * r, false, 4 * r));
            cost.layers.push(conv(mid, cout, 3, r, false, 2 * r));
            cost.activation_elems = 4 * r * r * mid + r * r * cout;
        }
        BlockKind::UnifiedFfn => {
            let hidden = e * cin;
            cost.layers.push(conv(cin, hidden, 1, r, false, r));
            cost.layers.push(conv(hidden, hidden, k, r, true, r));
            cost.layers.push(conv(hidden, cout, 1, r, false, r));
            cost.activation_elems = 2 * r * r * hidden;
        }
        BlockKind::FusedFfn => {
            let hidden = e * cin;
            cost.layers.push(conv(cin, hidden, k, r, false, r));
            cost.layers.push(conv(hidden, cout, 1, r, false, r));
            cost.activation_elems = r * r * hidden;
        }
        BlockKind::Mhsa => {
            attention(&mut cost, cin, key.expansion.unwrap_or(1), r, shape);
        }
        BlockKind::Embed => {
            cost.layers.push(conv(cin, cout, 3, r, false, 2 * r));
        }
        BlockKind::MhsaDownsample => {
            cost.layers.push(conv(cin, cout, 3, r, false, 2 * r));
            attention(&mut cost, cout, key.expansion.unwrap_or(1), r, shape);
        }
        BlockKind::OutputHead => {
            cost.layers.push(linear(1, cin, cout));
        }
    }
    cost
}

pub fn count_params_with(arch: &SubnetArch, shape: AttentionShape) -> u64 {
    arch.blocks
        .iter()
        .map(|b| block_cost(&b.key(), shape).params())
        .sum()
}

pub fn count_flops_with(arch: &SubnetArch, shape: AttentionShape) -> u64 {
    arch.blocks
        .iter()
        .map(|b| block_cost(&b.key(), shape).flops())
        .sum()
}

/// Weights plus biases under the default attention layout.
pub fn count_params(arch: &SubnetArch) -> u64 {
    count_params_with(arch, AttentionShape::default())
}

/// Twice the multiply-accumulates under the default attention layout. The
/// resolutions stored in the blocks determine the feature-map sizes.
pub fn count_flops(arch: &SubnetArch) -> u64 {
    count_flops_with(arch, AttentionShape::default())
}
