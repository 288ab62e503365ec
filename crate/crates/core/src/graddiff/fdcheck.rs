//! Central finite-difference verification of analytic gradients.

use crate::graddiff::params::ParameterStore;
use crate::graddiff::real::Real;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone)]
pub struct FdReport {
    pub probes: usize,
    pub skipped: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
}

/// Compares the analytic gradient against central differences on randomly
/// probed parameter coordinates.
///
/// `eval` computes the scalar loss from the current parameter values.
/// `eval_grad` additionally accumulates gradients into the store. Probes
/// whose analytic and numeric gradients are both below `abs_floor` are
/// counted as skipped (unresolvable against roundoff).
pub fn finite_difference_check<F: Real>(
    params: &mut ParameterStore<F>,
    mut eval: impl FnMut(&ParameterStore<F>) -> f64,
    mut eval_grad: impl FnMut(&mut ParameterStore<F>) -> f64,
    probe_count: usize,
    step: f64,
    abs_floor: f64,
    seed: u64,
) -> FdReport {
    params.zero_grads();
    let _ = eval_grad(params);
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|e| e.grad.iter().map(|g| g.as_f64()).collect())
        .collect();
    let names: Vec<String> = params.iter().map(|e| e.name.clone()).collect();
    let sizes: Vec<usize> = params.iter().map(|e| e.values.len()).collect();
    let total: usize = sizes.iter().sum();
    assert!(total > 0, "no parameters to probe");

    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = FdReport {
        probes: 0,
        skipped: 0,
        max_rel_err: 0.0,
        mean_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
    };
    let mut err_sum = 0.0;
    for _ in 0..probe_count {
        let mut flat = rng.random_range(0..total);
        let mut pidx = 0;
        while flat >= sizes[pidx] {
            flat -= sizes[pidx];
            pidx += 1;
        }
        let name = names[pidx].clone();
        let theta = params.entry(pidx).values[flat].as_f64();
        let h = step * (1.0 + theta.abs());

        set_value(params, pidx, flat, theta + h);
        let fp = eval(params);
        set_value(params, pidx, flat, theta - h);
        let fm = eval(params);
        set_value(params, pidx, flat, theta);

        let fd = (fp - fm) / (2.0 * h);
        let an = analytic[pidx][flat];
        if fd.abs() < abs_floor && an.abs() < abs_floor {
            report.skipped += 1;
            continue;
        }
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(abs_floor);
        report.probes += 1;
        err_sum += rel;
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst_param = name;
            report.worst_index = flat;
        }
    }
    if report.probes > 0 {
        report.mean_rel_err = err_sum / report.probes as f64;
    }
    report
}

fn set_value<F: Real>(params: &mut ParameterStore<F>, pidx: usize, flat: usize, value: f64) {
    let name = params.entry(pidx).name.clone();
    params.values_mut(&name)[flat] = F::of(value);
}
