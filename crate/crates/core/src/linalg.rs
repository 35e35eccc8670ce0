//! Mat-vec and rank-one updates that skip zero entries.
//!
//! Hash-backbone vectors have a few dozen non-zeros out of hundreds or
//! thousands of coordinates, so the projections are cheap when only the
//! non-zero columns are visited.

use ndarray::{Array1, Array2};

// Dense is faster once a vector is more than about a quarter filled.
const SPARSE_FILL: usize = 4;

fn nonzeros(v: &Array1<f64>) -> Option<Vec<usize>> {
    let nz: Vec<usize> = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, _)| i).collect();
    (nz.len() * SPARSE_FILL <= v.len()).then_some(nz)
}

/// `m . v`; the caller checks that shapes agree.
pub(crate) fn matvec(m: &Array2<f64>, v: &Array1<f64>) -> Array1<f64> {
    match nonzeros(v) {
        None => m.dot(v),
        Some(nz) => Array1::from_iter(m.rows().into_iter().map(|row| nz.iter().map(|&j| row[j] * v[j]).sum())),
    }
}

/// `m += alpha * a b^T`
pub(crate) fn add_outer(m: &mut Array2<f64>, alpha: f64, a: &Array1<f64>, b: &Array1<f64>) {
    let nz = nonzeros(b);
    for (i, mut row) in m.rows_mut().into_iter().enumerate() {
        let ai = alpha * a[i];
        if ai == 0.0 {
            continue;
        }
        match &nz {
            None => row.scaled_add(ai, b),
            Some(nz) => {
                for &j in nz {
                    row[j] += ai * b[j];
                }
            }
        }
    }
}
