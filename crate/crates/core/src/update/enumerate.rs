use super::{AssociationMap, PsiTable};

/// Every valid association map with non-zero score, in depth-first order.
pub fn enumerate_maps(psi: &PsiTable) -> Vec<AssociationMap> {
    let mut out = Vec::new();
    let mut state = vec![0i32; psi.rows()];
    let mut taken = vec![false; psi.measurements()];
    recurse(psi, 0, &mut state, &mut taken, &mut out);
    out
}

fn recurse(psi: &PsiTable, row: usize, state: &mut Vec<i32>, taken: &mut Vec<bool>, out: &mut Vec<AssociationMap>) {
    if row == psi.rows() {
        out.push(AssociationMap::new(state.clone()));
        return;
    }
    for c in -1..=psi.measurements() as i32 {
        if psi.score(row, c) <= 0.0 {
            continue;
        }
        if c > 0 {
            let j = c as usize - 1;
            if taken[j] {
                continue;
            }
            taken[j] = true;
            state[row] = c;
            recurse(psi, row + 1, state, taken, out);
            taken[j] = false;
        } else {
            state[row] = c;
            recurse(psi, row + 1, state, taken, out);
        }
    }
}
