use std::collections::HashMap;

use rand::Rng;

use super::{AssociationMap, PsiTable};

/// Systematic-scan Gibbs sampler over valid association maps.
///
/// Each sweep resamples every row from its conditional given the other
/// rows, excluding measurements held elsewhere and zero-score columns. A row
/// with no admissible non-zero column is set to "absent". The chain starts
/// from the all-misdetected map and the state after every sweep is
/// recorded. Returns distinct maps with visit counts, in first-visit order.
pub fn gibbs_sample_with<R: Rng>(psi: &PsiTable, sweeps: usize, rng: &mut R) -> Vec<(AssociationMap, usize)> {
    let rows = psi.rows();
    let m = psi.measurements();
    let mut state = vec![0i32; rows];
    // owner[j] = row holding measurement j (1-based j, index j-1)
    let mut owner: Vec<Option<usize>> = vec![None; m];

    let support: Vec<Vec<(i32, f64)>> = (0..rows)
        .map(|r| {
            (-1..=m as i32)
                .map(|c| (c, psi.score(r, c)))
                .filter(|(_, s)| *s > 0.0)
                .collect()
        })
        .collect();
    // all-misdetected may itself be inadmissible for some rows
    for r in 0..rows {
        if psi.score(r, 0) <= 0.0 {
            state[r] = -1;
        }
    }

    let mut index: HashMap<Vec<i32>, usize> = HashMap::new();
    let mut visits: Vec<(AssociationMap, usize)> = Vec::new();
    let mut weights: Vec<f64> = Vec::with_capacity(m + 2);

    for _ in 0..sweeps {
        for r in 0..rows {
            if state[r] > 0 {
                owner[state[r] as usize - 1] = None;
            }
            weights.clear();
            let mut total = 0.0;
            for &(c, s) in &support[r] {
                let free = c <= 0 || owner[c as usize - 1].is_none();
                let w = if free { s } else { 0.0 };
                total += w;
                weights.push(w);
            }
            let choice = if total > 0.0 {
                let mut u = rng.random::<f64>() * total;
                let mut pick = None;
                for (k, w) in weights.iter().enumerate() {
                    if *w > 0.0 {
                        pick = Some(k);
                        if u < *w {
                            break;
                        }
                        u -= w;
                    }
                }
                support[r][pick.expect("positive total has a positive entry")].0
            } else {
                -1
            };
            state[r] = choice;
            if choice > 0 {
                owner[choice as usize - 1] = Some(r);
            }
        }
        match index.get(&state) {
            Some(&i) => visits[i].1 += 1,
            None => {
                index.insert(state.clone(), visits.len());
                visits.push((AssociationMap::new(state.clone()), 1));
            }
        }
    }
    visits
}
