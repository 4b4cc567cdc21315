//! Central finite-difference gradient oracle.
//!
//! For every scalar coordinate `θᵢ` of every parameter in a [`ParamStore`],
//! compares the analytic gradient with `(f(θ + h·eᵢ) − f(θ − h·eᵢ)) / 2h`.
//! The relative error of a coordinate is
//! `|analytic − numeric| / max(|analytic|, |numeric|, floor)`; the floor keeps
//! coordinates whose true gradient is (numerically) zero from dominating.
//!
//! Coordinates whose perturbation changes the ReLU activation pattern are
//! reported as kinks and excluded from the maximum.

use std::fmt;

use super::params::ParamStore;

/// A deterministic scalar function of the parameters in a store.
pub trait Objective {
    /// Loss at the current parameter values together with a fingerprint of
    /// every ReLU sign pattern the evaluation went through.
    fn loss(&self, store: &ParamStore) -> (f64, u64);

    /// Zeroes the gradient buffers, fills them with `∂f/∂θ`, returns `f(θ)`.
    fn loss_and_grad(&self, store: &mut ParamStore) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub step: f64,
    pub tolerance: f64,
    pub floor: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-6,
        }
    }
}

impl GradcheckConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        GradcheckConfig {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub checked: usize,
    pub kinks: usize,
    pub max_rel_err: f64,
    /// Flat index of the worst coordinate, with its analytic and numeric values.
    pub worst: Option<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Set when the objective was non-finite at some evaluated point.
    pub failure: Option<String>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.max_rel_err <= self.tolerance
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }

    pub fn kinks(&self) -> usize {
        self.groups.iter().map(|g| g.kinks).sum()
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} max_rel_err={:.3e} tol={:.1e} checked={} kinks_skipped={}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.tolerance,
            self.checked(),
            self.kinks()
        )?;
        if let Some(msg) = &self.failure {
            writeln!(f, "  oracle failure: {msg}")?;
        }
        for g in &self.groups {
            write!(f, "  {:<28} rel_err={:.3e} n={}", g.name, g.max_rel_err, g.checked)?;
            if g.kinks > 0 {
                write!(f, " kinks={}", g.kinks)?;
            }
            if let Some((i, a, n)) = g.worst {
                write!(f, " worst[{i}] analytic={a:.6e} numeric={n:.6e}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn gradcheck<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParamStore,
    cfg: GradcheckConfig,
) -> GradcheckReport {
    let base = objective.loss_and_grad(store);
    let mut report = GradcheckReport {
        groups: Vec::new(),
        max_rel_err: 0.0,
        tolerance: cfg.tolerance,
        failure: None,
    };
    if !base.is_finite() {
        report.failure = Some(format!("objective is {base} at the unperturbed point"));
        return report;
    }
    let (_, base_pattern) = objective.loss(store);
    let analytic: Vec<Vec<f64>> = store.ids().map(|id| store.grad(id).to_vec()).collect();

    for id in store.ids().collect::<Vec<_>>() {
        let name = store.info(id).name.clone();
        let mut group = GroupReport {
            name,
            checked: 0,
            kinks: 0,
            max_rel_err: 0.0,
            worst: None,
        };
        for i in 0..store.value(id).len() {
            let original = store.value(id)[i];
            store.value_mut(id)[i] = original + cfg.step;
            let (plus, plus_pattern) = objective.loss(store);
            store.value_mut(id)[i] = original - cfg.step;
            let (minus, minus_pattern) = objective.loss(store);
            store.value_mut(id)[i] = original;

            if !plus.is_finite() || !minus.is_finite() {
                report.failure = Some(format!(
                    "objective non-finite when perturbing {}[{i}]",
                    group.name
                ));
                continue;
            }
            if plus_pattern != base_pattern || minus_pattern != base_pattern {
                group.kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[id.index()][i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            group.checked += 1;
            if err > group.max_rel_err || group.worst.is_none() {
                group.max_rel_err = group.max_rel_err.max(err);
                group.worst = Some((i, a, numeric));
            }
        }
        report.max_rel_err = report.max_rel_err.max(group.max_rel_err);
        report.groups.push(group);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ops::sigmoid;

    struct Square;

    impl Objective for Square {
        fn loss(&self, store: &ParamStore) -> (f64, u64) {
            let t = store.value(store.ids().next().unwrap())[0];
            (t * t, 0)
        }

        fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
            store.zero_grads();
            let id = store.ids().next().unwrap();
            let t = store.value(id)[0];
            let (_, mut g) = store.split();
            g.get_mut(id)[0] = 2.0 * t;
            t * t
        }
    }

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        store.add("theta", (1, 1), vec![3.0]);
        let report = gradcheck(&Square, &mut store, GradcheckConfig::default());
        let (_, a, n) = report.groups[0].worst.unwrap();
        assert_eq!(a, 6.0);
        // central differences are exact for quadratics up to rounding
        assert!((n - 6.0).abs() < 1e-9);
        assert!(report.passed());
    }

    /// Log loss of a one-layer sigmoid model `σ(w·x + b)` on one instance.
    struct Logistic {
        x: Vec<f64>,
        y: f64,
    }

    impl Objective for Logistic {
        fn loss(&self, store: &ParamStore) -> (f64, u64) {
            let w = store.value(store.find("w").unwrap());
            let b = store.value(store.find("b").unwrap())[0];
            let s: f64 = w.iter().zip(&self.x).map(|(a, b)| a * b).sum::<f64>() + b;
            let p = sigmoid(s);
            (-(self.y * p.ln() + (1.0 - self.y) * (1.0 - p).ln()), 0)
        }

        fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
            store.zero_grads();
            let (loss, _) = self.loss(store);
            let wid = store.find("w").unwrap();
            let bid = store.find("b").unwrap();
            let w = store.value(wid).to_vec();
            let b = store.value(bid)[0];
            let s: f64 = w.iter().zip(&self.x).map(|(a, b)| a * b).sum::<f64>() + b;
            let ds = sigmoid(s) - self.y;
            let (_, mut g) = store.split();
            for (gi, xi) in g.get_mut(wid).iter_mut().zip(&self.x) {
                *gi = ds * xi;
            }
            g.get_mut(bid)[0] = ds;
            loss
        }
    }

    #[test]
    fn logistic_self_test_passes_at_1e_5() {
        let mut store = ParamStore::new();
        store.add("w", (3, 1), vec![0.3, -0.7, 1.1]);
        store.add("b", (1, 1), vec![0.2]);
        let obj = Logistic {
            x: vec![1.5, 0.4, -0.9],
            y: 1.0,
        };
        let report = gradcheck(&obj, &mut store, GradcheckConfig::with_tolerance(1e-5));
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        struct Wrong;
        impl Objective for Wrong {
            fn loss(&self, store: &ParamStore) -> (f64, u64) {
                Square.loss(store)
            }
            fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
                let l = Square.loss_and_grad(store);
                let id = store.ids().next().unwrap();
                let (_, mut g) = store.split();
                g.get_mut(id)[0] *= 1.01;
                l
            }
        }
        let mut store = ParamStore::new();
        store.add("theta", (1, 1), vec![3.0]);
        assert!(!gradcheck(&Wrong, &mut store, GradcheckConfig::default()).passed());
    }

    #[test]
    fn non_finite_objective_reports_failure() {
        struct Log;
        impl Objective for Log {
            fn loss(&self, store: &ParamStore) -> (f64, u64) {
                (store.value(store.ids().next().unwrap())[0].ln(), 0)
            }
            fn loss_and_grad(&self, store: &mut ParamStore) -> f64 {
                store.zero_grads();
                let id = store.ids().next().unwrap();
                let t = store.value(id)[0];
                let (_, mut g) = store.split();
                g.get_mut(id)[0] = 1.0 / t;
                t.ln()
            }
        }
        let mut store = ParamStore::new();
        store.add("theta", (1, 1), vec![5e-5]);
        let report = gradcheck(&Log, &mut store, GradcheckConfig::default());
        assert!(!report.passed());
        assert!(report.failure.is_some());
    }
}
