//! Fixed-size binary encoding: one 24-bit row per block, 44 rows.
//!
//! Row layout, low bit first: stage (4) | input width index (4) | output
//! width index (4) | FFN expansion index (3) | attention expansion index (3)
//! | FFN type (2) | kernel index (2) | activation (2). Every field is one-hot
//! and fields a block kind does not use stay zero. Width, expansion and
//! kernel indices refer to the space's listing order; FFN type and
//! activation use the fixed `{Fused, Unified}` / `{GELU, ReLU}` order.

use super::{Activation, BlockKind, BlockSpec, FfnType, SubnetArch};
use crate::space::{EmbedChoices, SearchSpace};
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const ENCODING_ROWS: usize = 44;
pub const ENCODING_WIDTH: usize = 24;

pub const FIELD_STAGE: Range<usize> = 0..4;
pub const FIELD_IN_WIDTH: Range<usize> = 4..8;
pub const FIELD_OUT_WIDTH: Range<usize> = 8..12;
pub const FIELD_FFN_EXPANSION: Range<usize> = 12..15;
pub const FIELD_MHSA_EXPANSION: Range<usize> = 15..18;
pub const FIELD_FFN_TYPE: Range<usize> = 18..20;
pub const FIELD_KERNEL: Range<usize> = 20..22;
pub const FIELD_ACTIVATION: Range<usize> = 22..24;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodingError {
    #[error("{0} blocks exceed the {ENCODING_ROWS}-row encoding")]
    TooManyBlocks(usize),
    #[error("block {block} cannot be encoded: {reason}")]
    Unencodable { block: usize, reason: String },
    #[error("malformed encoding at row {row}: {reason}")]
    MalformedEncoding { row: usize, reason: String },
}

/// The 44x24 binary matrix. Row `i` is stored in the low 24 bits of
/// `rows[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedSubnet {
    pub rows: Vec<u32>,
}

impl Default for EncodedSubnet {
    fn default() -> Self {
        EncodedSubnet {
            rows: vec![0; ENCODING_ROWS],
        }
    }
}

impl EncodedSubnet {
    pub fn bit(&self, row: usize, col: usize) -> bool {
        self.rows[row] >> col & 1 == 1
    }

    pub fn set(&mut self, row: usize, col: usize) {
        self.rows[row] |= 1 << col;
    }

    /// Column indices of the set bits of a row, ascending.
    pub fn set_bits(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        let r = self.rows[row];
        (0..ENCODING_WIDTH).filter(move |&c| r >> c & 1 == 1)
    }

    /// Number of non-padding rows.
    pub fn used_rows(&self) -> usize {
        self.rows.iter().rposition(|&r| r != 0).map_or(0, |i| i + 1)
    }

    /// Row-major dense matrix of 0.0 / 1.0.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; ENCODING_ROWS * ENCODING_WIDTH];
        for (r, &bits) in self.rows.iter().enumerate() {
            for c in 0..ENCODING_WIDTH {
                if bits >> c & 1 == 1 {
                    out[r * ENCODING_WIDTH + c] = 1.0;
                }
            }
        }
        out
    }

    /// Flat `'0'`/`'1'` string, rows in order, bit 0 first within a row.
    pub fn to_bit_string(&self) -> String {
        let mut s = String::with_capacity(ENCODING_ROWS * ENCODING_WIDTH);
        for &bits in &self.rows {
            for c in 0..ENCODING_WIDTH {
                s.push(if bits >> c & 1 == 1 { '1' } else { '0' });
            }
        }
        s
    }

    pub fn from_bit_string(s: &str) -> Option<Self> {
        if s.len() != ENCODING_ROWS * ENCODING_WIDTH {
            return None;
        }
        let mut enc = EncodedSubnet::default();
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '1' => enc.set(i / ENCODING_WIDTH, i % ENCODING_WIDTH),
                '0' => {}
                _ => return None,
            }
        }
        Some(enc)
    }
}

fn field(bits: u32, f: &Range<usize>) -> u32 {
    (bits >> f.start) & ((1 << f.len()) - 1)
}

fn index_in<T: PartialEq + Copy>(
    list: &[T],
    value: Option<T>,
    block: usize,
    what: &str,
) -> Result<usize, EncodingError> {
    value
        .and_then(|v| list.iter().position(|&x| x == v))
        .ok_or_else(|| EncodingError::Unencodable {
            block,
            reason: format!("{what} not in the space"),
        })
}

fn put(row: &mut u32, f: &Range<usize>, index: usize, block: usize) -> Result<(), EncodingError> {
    if index >= f.len() {
        return Err(EncodingError::Unencodable {
            block,
            reason: format!("index {index} overflows a {}-bit field", f.len()),
        });
    }
    *row |= 1 << (f.start + index);
    Ok(())
}

fn encode_block(space: &SearchSpace, i: usize, b: &BlockSpec) -> Result<u32, EncodingError> {
    let stage = space
        .stages
        .get(b.stage)
        .ok_or_else(|| EncodingError::Unencodable {
            block: i,
            reason: format!("stage {} outside the space", b.stage),
        })?;
    let mut row = 0u32;
    put(&mut row, &FIELD_STAGE, b.stage, i)?;
    let own = |w: u32, what| index_in(&stage.widths, Some(w), i, what);
    match b.kind {
        BlockKind::Stem => {
            put(
                &mut row,
                &FIELD_OUT_WIDTH,
                own(b.out_width, "stem width")?,
                i,
            )?;
        }
        BlockKind::Embed | BlockKind::MhsaDownsample => {
            let prev = b
                .stage
                .checked_sub(1)
                .map(|s| &space.stages[s].widths)
                .ok_or_else(|| EncodingError::Unencodable {
                    block: i,
                    reason: "embedding layer in the first stage".into(),
                })?;
            put(
                &mut row,
                &FIELD_IN_WIDTH,
                index_in(prev, Some(b.in_width), i, "input width")?,
                i,
            )?;
            put(
                &mut row,
                &FIELD_OUT_WIDTH,
                own(b.out_width, "output width")?,
                i,
            )?;
            if b.kind == BlockKind::MhsaDownsample {
                let choices = match &space.embeds[b.stage - 1] {
                    EmbedChoices::MhsaDownsample(a) => a,
                    EmbedChoices::Conv => {
                        return Err(EncodingError::Unencodable {
                            block: i,
                            reason: "embedding does not allow attention".into(),
                        })
                    }
                };
                let e = index_in(&choices.expansions, b.expansion, i, "attention expansion")?;
                put(&mut row, &FIELD_MHSA_EXPANSION, e, i)?;
            }
        }
        BlockKind::UnifiedFfn | BlockKind::FusedFfn => {
            put(&mut row, &FIELD_IN_WIDTH, own(b.in_width, "width")?, i)?;
            put(&mut row, &FIELD_OUT_WIDTH, own(b.out_width, "width")?, i)?;
            let e = index_in(&stage.expansions, b.expansion, i, "FFN expansion")?;
            put(&mut row, &FIELD_FFN_EXPANSION, e, i)?;
            let t = b.kind.ffn_type().expect("ffn kind").index();
            put(&mut row, &FIELD_FFN_TYPE, t, i)?;
            put(
                &mut row,
                &FIELD_KERNEL,
                index_in(&stage.kernels, b.kernel, i, "kernel")?,
                i,
            )?;
        }
        BlockKind::Mhsa => {
            put(&mut row, &FIELD_IN_WIDTH, own(b.in_width, "width")?, i)?;
            put(&mut row, &FIELD_OUT_WIDTH, own(b.out_width, "width")?, i)?;
            let choices = stage
                .mhsa
                .as_ref()
                .ok_or_else(|| EncodingError::Unencodable {
                    block: i,
                    reason: "stage does not allow attention".into(),
                })?;
            let e = index_in(&choices.expansions, b.expansion, i, "attention expansion")?;
            put(&mut row, &FIELD_MHSA_EXPANSION, e, i)?;
        }
        BlockKind::OutputHead => {
            put(&mut row, &FIELD_IN_WIDTH, own(b.in_width, "head width")?, i)?;
        }
    }
    if let Some(a) = b.activation {
        put(&mut row, &FIELD_ACTIVATION, a.index(), i)?;
    }
    Ok(row)
}

/// Encodes `arch` against the choice lists of `space`.
pub fn encode(space: &SearchSpace, arch: &SubnetArch) -> Result<EncodedSubnet, EncodingError> {
    if arch.blocks.len() > ENCODING_ROWS {
        return Err(EncodingError::TooManyBlocks(arch.blocks.len()));
    }
    let mut enc = EncodedSubnet::default();
    for (i, b) in arch.blocks.iter().enumerate() {
        enc.rows[i] = encode_block(space, i, b)?;
    }
    Ok(enc)
}

struct RowFields {
    row: usize,
    bits: u32,
}

impl RowFields {
    fn bad(&self, reason: impl Into<String>) -> EncodingError {
        EncodingError::MalformedEncoding {
            row: self.row,
            reason: reason.into(),
        }
    }

    /// Index of the single set bit of a field, `None` when the field is empty.
    fn one_hot(&self, f: &Range<usize>, name: &str) -> Result<Option<usize>, EncodingError> {
        let v = field(self.bits, f);
        match v.count_ones() {
            0 => Ok(None),
            1 => Ok(Some(v.trailing_zeros() as usize)),
            n => Err(self.bad(format!("{n} bits set in the {name} field"))),
        }
    }

    fn required(&self, f: &Range<usize>, name: &str) -> Result<usize, EncodingError> {
        self.one_hot(f, name)?
            .ok_or_else(|| self.bad(format!("{name} field is empty")))
    }

    fn lookup<T: Copy>(
        &self,
        list: &[T],
        f: &Range<usize>,
        name: &str,
    ) -> Result<T, EncodingError> {
        let i = self.required(f, name)?;
        list.get(i)
            .copied()
            .ok_or_else(|| self.bad(format!("{name} index {i} is not in the space")))
    }

    fn activation(&self) -> Result<Activation, EncodingError> {
        let i = self.required(&FIELD_ACTIVATION, "activation")?;
        Ok(Activation::from_index(i).expect("2-bit field"))
    }
}

/// Inverse of [`encode`]. Block kinds follow from position and populated
/// fields: row 0 is the stem, the first row of a new stage is its embedding
/// layer, rows with an FFN type are FFN blocks, other rows carrying an
/// attention expansion are MHSA blocks, and the final row carrying only a
/// stage and an input width is the output head.
pub fn decode(space: &SearchSpace, enc: &EncodedSubnet) -> Result<SubnetArch, EncodingError> {
    if enc.rows.len() != ENCODING_ROWS {
        return Err(EncodingError::MalformedEncoding {
            row: 0,
            reason: format!("expected {ENCODING_ROWS} rows, got {}", enc.rows.len()),
        });
    }
    if let Some(row) = enc.rows.iter().position(|&r| r >> ENCODING_WIDTH != 0) {
        return Err(EncodingError::MalformedEncoding {
            row,
            reason: "bits set beyond column 24".into(),
        });
    }
    let used = enc.used_rows();
    if used == 0 {
        return Err(EncodingError::MalformedEncoding {
            row: 0,
            reason: "no stem row".into(),
        });
    }
    let mut blocks = Vec::with_capacity(used);
    let mut current_stage = 0usize;
    let mut saw_head = false;
    for row in 0..used {
        let f = RowFields {
            row,
            bits: enc.rows[row],
        };
        if f.bits == 0 {
            return Err(f.bad("empty row before the last block"));
        }
        if saw_head {
            return Err(f.bad("rows after the output head"));
        }
        let stage = f.required(&FIELD_STAGE, "stage")?;
        let cs = space
            .stages
            .get(stage)
            .ok_or_else(|| f.bad(format!("stage {stage} is not in the space")))?;
        let resolution = space.stage_resolution(stage);
        let block = if row == 0 {
            if stage != 0 {
                return Err(f.bad("first row is not a stem"));
            }
            BlockSpec {
                stage: 0,
                kind: BlockKind::Stem,
                in_width: 3,
                out_width: f.lookup(&cs.widths, &FIELD_OUT_WIDTH, "output width")?,
                expansion: None,
                kernel: Some(3),
                activation: Some(f.activation()?),
                resolution,
            }
        } else if stage != current_stage {
            if stage != current_stage + 1 {
                return Err(f.bad(format!("stage jumps from {current_stage} to {stage}")));
            }
            current_stage = stage;
            let in_width = f.lookup(
                &space.stages[stage - 1].widths,
                &FIELD_IN_WIDTH,
                "input width",
            )?;
            let out_width = f.lookup(&cs.widths, &FIELD_OUT_WIDTH, "output width")?;
            match &space.embeds[stage - 1] {
                EmbedChoices::Conv => BlockSpec {
                    stage,
                    kind: BlockKind::Embed,
                    in_width,
                    out_width,
                    expansion: None,
                    kernel: Some(3),
                    activation: None,
                    resolution,
                },
                EmbedChoices::MhsaDownsample(a) => BlockSpec {
                    stage,
                    kind: BlockKind::MhsaDownsample,
                    in_width,
                    out_width,
                    expansion: Some(f.lookup(
                        &a.expansions,
                        &FIELD_MHSA_EXPANSION,
                        "attention expansion",
                    )?),
                    kernel: None,
                    activation: Some(f.activation()?),
                    resolution,
                },
            }
        } else if let Some(t) = f.one_hot(&FIELD_FFN_TYPE, "FFN type")? {
            let w = f.lookup(&cs.widths, &FIELD_IN_WIDTH, "input width")?;
            BlockSpec {
                stage,
                kind: FfnType::from_index(t).expect("2-bit field").block_kind(),
                in_width: w,
                out_width: f.lookup(&cs.widths, &FIELD_OUT_WIDTH, "output width")?,
                expansion: Some(f.lookup(&cs.expansions, &FIELD_FFN_EXPANSION, "FFN expansion")?),
                kernel: Some(f.lookup(&cs.kernels, &FIELD_KERNEL, "kernel")?),
                activation: Some(f.activation()?),
                resolution,
            }
        } else if f
            .one_hot(&FIELD_MHSA_EXPANSION, "attention expansion")?
            .is_some()
        {
            let a = cs
                .mhsa
                .as_ref()
                .ok_or_else(|| f.bad("attention in a stage without attention"))?;
            BlockSpec {
                stage,
                kind: BlockKind::Mhsa,
                in_width: f.lookup(&cs.widths, &FIELD_IN_WIDTH, "input width")?,
                out_width: f.lookup(&cs.widths, &FIELD_OUT_WIDTH, "output width")?,
                expansion: Some(f.lookup(
                    &a.expansions,
                    &FIELD_MHSA_EXPANSION,
                    "attention expansion",
                )?),
                kernel: None,
                activation: Some(f.activation()?),
                resolution,
            }
        } else {
            saw_head = true;
            BlockSpec {
                stage,
                kind: BlockKind::OutputHead,
                in_width: f.lookup(&cs.widths, &FIELD_IN_WIDTH, "input width")?,
                out_width: space.num_classes,
                expansion: None,
                kernel: None,
                activation: None,
                resolution: 1,
            }
        };
        // Any bit the decoded block would not produce is a layout violation.
        let expected = encode_block(space, row, &block).map_err(|e| f.bad(e.to_string()))?;
        if expected != f.bits {
            return Err(f.bad(format!(
                "fields {:#08x} do not fit a {:?} block",
                f.bits ^ expected,
                block.kind
            )));
        }
        blocks.push(block);
    }
    Ok(SubnetArch {
        input_resolution: space.input_resolution,
        blocks,
    })
}
