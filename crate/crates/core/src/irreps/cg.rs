//! Clebsch-Gordan coupling tables for the real basis.
//!
//! A table for (l1, l2, l3) is the unique (up to sign and scale) tensor
//! `C[m3][m1][m2]` satisfying `D3(R) C = C (D1(R) (x) D2(R))` for every
//! rotation R. It is found as the null space of that constraint assembled
//! for a fixed set of generic rotations, which keeps the construction tied
//! to the exact same Wigner matrices the rest of the crate uses. Tables are
//! normalized so each m3 slice has unit Frobenius norm, which makes the
//! coupling variance preserving for unit-variance inputs.

use crate::geom::jacobi_eigh;
use crate::irreps::wigner::{wigner_d, RotationSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// One coupling table plus its nonzero entries in a flat list for fast
/// contraction kernels.
#[derive(Debug, Clone)]
pub struct CgTable {
    pub l1: usize,
    pub l2: usize,
    pub l3: usize,
    /// Dense coefficients, index [m3][m1][m2] row-major.
    pub coeffs: Vec<f64>,
    /// (m3, m1, m2, coefficient) for every |coefficient| > 1e-14.
    pub nonzero: Vec<(usize, usize, usize, f64)>,
}

impl CgTable {
    pub fn dims(&self) -> (usize, usize, usize) {
        (2 * self.l3 + 1, 2 * self.l1 + 1, 2 * self.l2 + 1)
    }

    pub fn get(&self, m3: usize, m1: usize, m2: usize) -> f64 {
        let (_, n1, n2) = self.dims();
        self.coeffs[(m3 * n1 + m1) * n2 + m2]
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Selection rule: degree l3 occurs in l1 (x) l2 iff |l1-l2| <= l3 <= l1+l2.
pub fn selection_rule(l1: usize, l2: usize, l3: usize) -> bool {
    let lo = l1.abs_diff(l2);
    let hi = l1 + l2;
    lo <= l3 && l3 <= hi
}

/// Coupling table for (l1, l2, l3); empty when the selection rule fails.
/// Tables are cached for the lifetime of the process.
pub fn clebsch_gordan(l1: usize, l2: usize, l3: usize) -> &'static CgTable {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), &'static CgTable>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(t) = guard.get(&(l1, l2, l3)) {
        return t;
    }
    let table: &'static CgTable = Box::leak(Box::new(build_table(l1, l2, l3)));
    guard.insert((l1, l2, l3), table);
    table
}

/// Builds every table with all degrees <= l_max so later lookups are
/// read-only. Call once before spawning worker threads.
pub fn warm_cache(l_max: usize) {
    for l1 in 0..=l_max {
        for l2 in 0..=l_max {
            for l3 in 0..=l_max {
                if selection_rule(l1, l2, l3) {
                    let _ = clebsch_gordan(l1, l2, l3);
                }
            }
        }
    }
}

fn build_table(l1: usize, l2: usize, l3: usize) -> CgTable {
    if !selection_rule(l1, l2, l3) {
        return CgTable { l1, l2, l3, coeffs: Vec::new(), nonzero: Vec::new() };
    }
    let n1 = 2 * l1 + 1;
    let n2 = 2 * l2 + 1;
    let n3 = 2 * l3 + 1;
    let ncols = n3 * n1 * n2;

    // Constraint rows: for each sample rotation R and each (i, j) position of
    // the residual D3 C - C (D1 (x) D2), a row over the unknown vec(C).
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c600);
    let n_rot = 4;
    let mut a = vec![0.0f64; n_rot * n3 * (n1 * n2) * ncols];
    let mut row = 0usize;
    for _ in 0..n_rot {
        let r = RotationSpec::random(&mut rng);
        let d1 = wigner_d(l1, &r);
        let d2 = wigner_d(l2, &r);
        let d3 = wigner_d(l3, &r);
        for i in 0..n3 {
            for j in 0..(n1 * n2) {
                let base = row * ncols;
                for k in 0..n3 {
                    a[base + k * n1 * n2 + j] += d3[i * n3 + k];
                }
                let (j1, j2) = (j / n2, j % n2);
                for b1 in 0..n1 {
                    for b2 in 0..n2 {
                        let kron = d1[b1 * n1 + j1] * d2[b2 * n2 + j2];
                        a[base + i * n1 * n2 + b1 * n2 + b2] -= kron;
                    }
                }
                row += 1;
            }
        }
    }

    // Gram matrix and its null space.
    let nrows = row;
    let mut gram = vec![0.0f64; ncols * ncols];
    for r in 0..nrows {
        let arow = &a[r * ncols..(r + 1) * ncols];
        for i in 0..ncols {
            let ai = arow[i];
            if ai == 0.0 {
                continue;
            }
            for j in i..ncols {
                gram[i * ncols + j] += ai * arow[j];
            }
        }
    }
    for i in 0..ncols {
        for j in 0..i {
            gram[i * ncols + j] = gram[j * ncols + i];
        }
    }
    let (vals, vecs) = jacobi_eigh(&gram, ncols);
    let max_val = vals[0].max(1.0);
    let null: Vec<usize> =
        (0..ncols).filter(|&i| vals[i].abs() < 1e-10 * max_val).collect();
    assert_eq!(
        null.len(),
        1,
        "expected one intertwiner for ({l1},{l2},{l3}), found {}",
        null.len()
    );
    let mut c: Vec<f64> = vecs[null[0] * ncols..(null[0] + 1) * ncols].to_vec();

    // Scale so each m3 slice has unit Frobenius norm (they are equal up to
    // roundoff by Schur orthogonality), then fix the overall sign.
    let total: f64 = c.iter().map(|x| x * x).sum();
    let scale = (n3 as f64 / total).sqrt();
    for x in c.iter_mut() {
        *x *= scale;
    }
    if let Some(first) = c.iter().find(|x| x.abs() > 1e-6) {
        if *first < 0.0 {
            for x in c.iter_mut() {
                *x = -*x;
            }
        }
    }
    for x in c.iter_mut() {
        if x.abs() < 1e-14 {
            *x = 0.0;
        }
    }

    let mut nonzero = Vec::new();
    for m3 in 0..n3 {
        for m1 in 0..n1 {
            for m2 in 0..n2 {
                let v = c[(m3 * n1 + m1) * n2 + m2];
                if v != 0.0 {
                    nonzero.push((m3, m1, m2, v));
                }
            }
        }
    }
    CgTable { l1, l2, l3, coeffs: c, nonzero }
}
