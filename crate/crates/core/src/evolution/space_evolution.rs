//! Moving the sampling distribution toward the choices of the best subnets.

use crate::predictor::AccuracyModel;
use crate::space::{
    Categorical, DistributionError, EmbedChoices, EmbedGene, Genome, SamplingDistribution,
    SearchSpace,
};
use crate::subnet::SubnetArch;

/// Mean predicted accuracy of `topk`.
pub fn space_quality<M: AccuracyModel + ?Sized>(topk: &[SubnetArch], model: &M) -> f64 {
    assert!(!topk.is_empty(), "space quality of an empty set");
    topk.iter().map(|a| model.predict(a)).sum::<f64>() / topk.len() as f64
}

struct Counter(Vec<f64>);

impl Counter {
    fn new(n: usize) -> Self {
        Counter(vec![0.0; n])
    }

    fn add<T: PartialEq>(&mut self, options: &[T], x: &T) {
        let i = options
            .iter()
            .position(|o| o == x)
            .expect("choice belongs to the space");
        self.0[i] += 1.0;
    }

    /// Observed frequencies, or `prior` when nothing was observed.
    fn finish(self, prior: &Categorical) -> Categorical {
        Categorical::from_counts(&self.0).unwrap_or_else(|| prior.clone())
    }
}

/// Frequency of every choice among `topk`. Slot-level dimensions pool all
/// slots of a stage. A dimension with no observation (attention options when
/// no top subnet uses attention in that stage) keeps its `prior` vector.
pub fn empirical_distribution(
    space: &SearchSpace,
    topk: &[Genome],
    prior: &SamplingDistribution,
) -> SamplingDistribution {
    let mut out = prior.clone();
    let mut stem = Counter::new(space.stem.activations.len());
    for g in topk {
        stem.add(&space.stem.activations, &g.stem_activation);
    }
    out.stem_activation = stem.finish(&prior.stem_activation);

    for (s, cs) in space.stages.iter().enumerate() {
        let mut width = Counter::new(cs.widths.len());
        let mut depth = Counter::new(cs.depths.len());
        let mut ty = Counter::new(cs.ffn_types.len());
        let mut exp = Counter::new(cs.expansions.len());
        let mut kernel = Counter::new(cs.kernels.len());
        let mut act = Counter::new(cs.activations.len());
        let mut presence = Counter::new(2);
        let (na, nb) = cs
            .mhsa
            .as_ref()
            .map_or((0, 0), |a| (a.expansions.len(), a.activations.len()));
        let mut mexp = Counter::new(na);
        let mut mact = Counter::new(nb);
        for g in topk {
            let st = &g.stages[s];
            width.add(&cs.widths, &st.width);
            depth.add(&cs.depths, &st.depth());
            for slot in &st.slots {
                ty.add(&cs.ffn_types, &slot.ffn.ffn_type);
                exp.add(&cs.expansions, &slot.ffn.expansion);
                kernel.add(&cs.kernels, &slot.ffn.kernel);
                act.add(&cs.activations, &slot.ffn.activation);
                if let Some(a) = &cs.mhsa {
                    presence.0[usize::from(slot.attention.is_some())] += 1.0;
                    if let Some(x) = slot.attention {
                        mexp.add(&a.expansions, &x.expansion);
                        mact.add(&a.activations, &x.activation);
                    }
                }
            }
        }
        let p = &prior.stages[s];
        let d = &mut out.stages[s];
        d.width = width.finish(&p.width);
        d.depth = depth.finish(&p.depth);
        d.ffn_type = ty.finish(&p.ffn_type);
        d.ffn_expansion = exp.finish(&p.ffn_expansion);
        d.kernel = kernel.finish(&p.kernel);
        d.ffn_activation = act.finish(&p.ffn_activation);
        if let (Some(d), Some(p)) = (&mut d.attention, &p.attention) {
            d.presence = presence.finish(&p.presence);
            d.expansion = mexp.finish(&p.expansion);
            d.activation = mact.finish(&p.activation);
        }
    }

    for (e, choices) in space.embeds.iter().enumerate() {
        let (EmbedChoices::MhsaDownsample(a), Some(p)) = (choices, &prior.embeds[e]) else {
            continue;
        };
        let mut exp = Counter::new(a.expansions.len());
        let mut act = Counter::new(a.activations.len());
        for g in topk {
            if let EmbedGene::MhsaDownsample(x) = g.embeds[e] {
                exp.add(&a.expansions, &x.expansion);
                act.add(&a.activations, &x.activation);
            }
        }
        let d = out.embeds[e].as_mut().expect("prior matches space");
        d.expansion = exp.finish(&p.expansion);
        d.activation = act.finish(&p.activation);
    }
    out
}

/// `lambda * p_t + (1 - lambda) * p_star`, vector by vector.
pub fn evolve_distribution(
    p_t: &SamplingDistribution,
    p_star: &SamplingDistribution,
    lambda: f64,
) -> Result<SamplingDistribution, DistributionError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(DistributionError::Invalid(format!(
            "lambda {lambda} outside [0, 1]"
        )));
    }
    let (sa, sb) = (p_t.support(), p_star.support());
    if sa != sb {
        let diff = sa
            .iter()
            .zip(&sb)
            .find(|(a, b)| a != b)
            .map(|(a, b)| format!("{}[{}] vs {}[{}]", a.0, a.1, b.0, b.1))
            .unwrap_or_else(|| format!("{} vs {} vectors", sa.len(), sb.len()));
        return Err(DistributionError::SupportMismatch(diff));
    }
    let mut out = p_t.clone();
    for (o, b) in out.vectors_mut().into_iter().zip(p_star.vectors()) {
        for (x, y) in o.0.iter_mut().zip(&b.0) {
            *x = lambda * *x + (1.0 - lambda) * y;
        }
    }
    Ok(out)
}
