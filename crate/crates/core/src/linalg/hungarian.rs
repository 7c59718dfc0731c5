use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assignment` with `assignment[row] = column`. Shortest augmenting
/// paths with row/column potentials, O(p³).
pub fn hungarian_match(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    if !cost.is_square() {
        return Err(Error::shape(
            "hungarian_match",
            "square cost matrix",
            format!("{}×{}", cost.nrows(), cost.ncols()),
        ));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("assignment cost"));
    }
    let n = cost.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }

    // 1-based bookkeeping: index 0 is a virtual column used to start each
    // augmentation. `matched[j]` is the row currently assigned to column j.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for row in 1..=n {
        matched[0] = row;
        let mut j0 = 0;
        let mut min_slack = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    way[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        // Flip the alternating path back to the virtual column.
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[matched[j] - 1] = j - 1;
    }
    Ok(assignment)
}

/// Total cost of an assignment produced by [`hungarian_match`].
pub fn assignment_cost(cost: &DMatrix<f64>, assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(row, &col)| cost[(row, col)]).sum()
}
