use super::{AttentionChoices, EmbedChoices, SearchSpace};
use crate::subnet::{BlockKind, BlockSpec, SubnetArch, ENCODING_ROWS};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One reason an architecture does not belong to a space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending block index, if the violation is local to one block.
    pub block: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.block {
            Some(i) => write!(f, "block {i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

struct Checker<'a> {
    arch: &'a SubnetArch,
    out: Vec<Violation>,
}

impl Checker<'_> {
    fn at(&mut self, block: usize, reason: impl Into<String>) {
        self.out.push(Violation {
            block: Some(block),
            reason: reason.into(),
        });
    }

    fn global(&mut self, reason: impl Into<String>) {
        self.out.push(Violation {
            block: None,
            reason: reason.into(),
        });
    }

    fn expect_eq<T: PartialEq + fmt::Debug>(&mut self, i: usize, what: &str, got: T, want: T) {
        if got != want {
            self.at(i, format!("{what} is {got:?}, expected {want:?}"));
        }
    }

    fn expect_in<T: PartialEq + fmt::Debug + Copy>(
        &mut self,
        i: usize,
        what: &str,
        got: Option<T>,
        allowed: &[T],
    ) {
        match got {
            Some(v) if allowed.contains(&v) => {}
            Some(v) => self.at(i, format!("{what} {v:?} not in {allowed:?}")),
            None => self.at(i, format!("{what} missing")),
        }
    }

    fn expect_none<T: fmt::Debug>(&mut self, i: usize, what: &str, got: Option<T>) {
        if let Some(v) = got {
            self.at(i, format!("{what} {v:?} not applicable to this block"));
        }
    }

    fn attention(&mut self, i: usize, b: &BlockSpec, choices: &AttentionChoices) {
        self.expect_in(i, "attention expansion", b.expansion, &choices.expansions);
        self.expect_in(
            i,
            "attention activation",
            b.activation,
            &choices.activations,
        );
        self.expect_none(i, "kernel", b.kernel);
    }

    fn stage_field(&mut self, i: usize, b: &BlockSpec, stage: usize) {
        if b.stage != stage {
            self.at(i, format!("stage is {}, expected {}", b.stage, stage));
        }
    }
}

/// Checks membership of every choice and all structural invariants. Never
/// stops at the first problem: every violation found is returned.
pub fn validate(space: &SearchSpace, arch: &SubnetArch) -> Result<(), Vec<Violation>> {
    let mut c = Checker {
        arch,
        out: Vec::new(),
    };
    let blocks = &c.arch.blocks;
    if arch.input_resolution != space.input_resolution {
        c.global(format!(
            "input resolution {} differs from the space's {}",
            arch.input_resolution, space.input_resolution
        ));
    }
    if blocks.len() > ENCODING_ROWS {
        c.global(format!(
            "{} blocks exceed the {ENCODING_ROWS}-row limit",
            blocks.len()
        ));
    }
    let mut cursor = 0usize;
    let mut width = match blocks.first() {
        Some(b) if b.kind == BlockKind::Stem => {
            c.stage_field(0, b, 0);
            c.expect_eq(0, "stem input width", b.in_width, 3);
            c.expect_in(0, "stem width", Some(b.out_width), &space.stages[0].widths);
            c.expect_eq(0, "stem kernel", b.kernel, Some(3));
            c.expect_none(0, "stem expansion", b.expansion);
            c.expect_in(0, "stem activation", b.activation, &space.stem.activations);
            c.expect_eq(
                0,
                "stem resolution",
                b.resolution,
                space.stage_resolution(0),
            );
            cursor = 1;
            Some(b.out_width)
        }
        Some(b) => {
            c.at(
                0,
                format!("first block must be the stem, found {:?}", b.kind),
            );
            None
        }
        None => {
            c.global("architecture has no blocks");
            return Err(c.out);
        }
    };

    for (s, stage) in space.stages.iter().enumerate() {
        let resolution = space.stage_resolution(s);
        if s > 0 {
            let embed = &space.embeds[s - 1];
            let expected_kind = match embed {
                EmbedChoices::Conv => BlockKind::Embed,
                EmbedChoices::MhsaDownsample(_) => BlockKind::MhsaDownsample,
            };
            match blocks.get(cursor) {
                Some(b) if matches!(b.kind, BlockKind::Embed | BlockKind::MhsaDownsample) => {
                    let i = cursor;
                    c.stage_field(i, b, s);
                    c.expect_eq(i, "embedding kind", b.kind, expected_kind);
                    if let Some(prev) = width {
                        c.expect_eq(i, "embedding input width", b.in_width, prev);
                    }
                    c.expect_in(i, "embedding width", Some(b.out_width), &stage.widths);
                    c.expect_eq(i, "embedding resolution", b.resolution, resolution);
                    match embed {
                        EmbedChoices::Conv => {
                            c.expect_eq(i, "embedding kernel", b.kernel, Some(3));
                            c.expect_none(i, "embedding expansion", b.expansion);
                            c.expect_none(i, "embedding activation", b.activation);
                        }
                        EmbedChoices::MhsaDownsample(a) if b.kind == BlockKind::MhsaDownsample => {
                            c.attention(i, b, a);
                        }
                        EmbedChoices::MhsaDownsample(_) => {}
                    }
                    width = Some(b.out_width);
                    cursor += 1;
                }
                _ => {
                    c.at(
                        cursor.min(blocks.len().saturating_sub(1)),
                        format!("missing embedding layer before stage {}", s + 1),
                    );
                    width = None;
                }
            }
        }

        let mut n_ffn = 0usize;
        let mut n_mhsa = 0usize;
        while let Some(b) = blocks.get(cursor) {
            if !(b.kind.is_ffn() || b.kind == BlockKind::Mhsa) {
                break;
            }
            let i = cursor;
            c.stage_field(i, b, s);
            let w = *width.get_or_insert(b.in_width);
            c.expect_eq(i, "input width", b.in_width, w);
            c.expect_eq(i, "output width", b.out_width, w);
            c.expect_eq(i, "resolution", b.resolution, resolution);
            if b.kind == BlockKind::Mhsa {
                n_mhsa += 1;
                match &stage.mhsa {
                    Some(a) => c.attention(i, b, a),
                    None => c.at(i, format!("stage {} does not allow MHSA", s + 1)),
                }
                if !blocks.get(i + 1).is_some_and(|n| n.kind.is_ffn()) {
                    c.at(i, "MHSA block is not followed by an FFN block");
                }
            } else {
                n_ffn += 1;
                let t = b.kind.ffn_type().expect("ffn kind");
                c.expect_in(i, "FFN type", Some(t), &stage.ffn_types);
                c.expect_in(i, "FFN expansion", b.expansion, &stage.expansions);
                c.expect_in(i, "kernel", b.kernel, &stage.kernels);
                c.expect_in(i, "FFN activation", b.activation, &stage.activations);
            }
            cursor += 1;
        }
        if !stage.depths.contains(&n_ffn) {
            c.global(format!(
                "stage {} has {n_ffn} FFN blocks, allowed depths are {:?}",
                s + 1,
                stage.depths
            ));
        }
        if n_mhsa > n_ffn {
            c.global(format!(
                "stage {} has N_mhsa = {n_mhsa} > N_ffn = {n_ffn}",
                s + 1
            ));
        }
    }

    match blocks.get(cursor) {
        Some(b) if b.kind == BlockKind::OutputHead => {
            let i = cursor;
            c.stage_field(i, b, space.last_stage());
            if let Some(w) = width {
                c.expect_eq(i, "head input width", b.in_width, w);
            }
            c.expect_eq(i, "head output width", b.out_width, space.num_classes);
            c.expect_eq(i, "head resolution", b.resolution, 1);
            c.expect_none(i, "head expansion", b.expansion);
            c.expect_none(i, "head kernel", b.kernel);
            c.expect_none(i, "head activation", b.activation);
            cursor += 1;
        }
        Some(b) => c.at(
            cursor,
            format!("expected the output head, found {:?}", b.kind),
        ),
        None => c.global("missing output head"),
    }
    if cursor < blocks.len() {
        c.at(
            cursor,
            format!("{} unexpected trailing blocks", blocks.len() - cursor),
        );
    }

    if c.out.is_empty() {
        Ok(())
    } else {
        Err(c.out)
    }
}
