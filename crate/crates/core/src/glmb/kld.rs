//! Kullback-Leibler divergence between labeled densities, by enumeration.
//!
//! A GLMB is read as a distribution over hypotheses, where a hypothesis is
//! a label set together with the Gaussian attached to each of its labels.
//! Two densities built from the same per-label Gaussians (a density and its
//! marginals, or products thereof) then differ only in how they weight
//! hypotheses: the Gaussian factors of the set integral cancel term by term
//! and the divergence reduces to a finite sum.

use std::collections::HashMap;

use super::LabeledGlmb;
use crate::error::{Error, Result};
use crate::factor::FactoredGlmb;
use crate::label::Label;

/// Largest label universe accepted by the enumeration.
pub const KLD_MAX_LABELS: usize = 12;

type Hypothesis = Vec<(Label, u64)>;

fn hypothesis_masses(g: &LabeledGlmb) -> HashMap<Hypothesis, f64> {
    let mut out: HashMap<Hypothesis, f64> = HashMap::new();
    for c in g.components() {
        let h: Hypothesis = c.densities.iter().map(|(l, d)| (*l, d.fingerprint())).collect();
        *out.entry(h).or_default() += c.weight;
    }
    out
}

fn guard(g: &LabeledGlmb) -> Result<()> {
    let size = g.label_universe().len();
    if size > KLD_MAX_LABELS {
        return Err(Error::UniverseTooLarge {
            size,
            limit: KLD_MAX_LABELS,
        });
    }
    Ok(())
}

fn divergence(p: &HashMap<Hypothesis, f64>, q: impl Fn(&Hypothesis) -> f64) -> Result<f64> {
    let mut total = 0.0;
    // fixed summation order keeps the result bit-reproducible
    let mut terms: Vec<(&Hypothesis, &f64)> = p.iter().collect();
    terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
    for (h, &pm) in terms {
        if pm <= 0.0 {
            continue;
        }
        let qm = q(h);
        if qm <= 0.0 {
            return Err(Error::SupportMismatch);
        }
        total += pm * (pm / qm).ln();
    }
    Ok(total)
}

/// `D(p; q)` for two labeled densities.
pub fn kld(p: &LabeledGlmb, q: &LabeledGlmb) -> Result<f64> {
    guard(p)?;
    guard(q)?;
    let pm = hypothesis_masses(p);
    let qm = hypothesis_masses(q);
    divergence(&pm, |h| qm.get(h).copied().unwrap_or(0.0))
}

/// `D(p; q_1 q_2 ... q_N)` for a factored approximation, without forming
/// the product.
pub fn kld_factored(p: &LabeledGlmb, q: &FactoredGlmb) -> Result<f64> {
    guard(p)?;
    let pm = hypothesis_masses(p);
    let factors: Vec<_> = q
        .factors()
        .iter()
        .map(|f| (&f.group, hypothesis_masses(&f.density)))
        .collect();
    divergence(&pm, |h| {
        if h.iter().any(|(l, _)| !factors.iter().any(|(g, _)| g.contains(l))) {
            return 0.0;
        }
        factors
            .iter()
            .map(|(group, masses)| {
                let part: Hypothesis = h.iter().filter(|(l, _)| group.contains(l)).copied().collect();
                masses.get(&part).copied().unwrap_or(0.0)
            })
            .product()
    })
}
