use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::RngStream;

use super::mask::LayerMask;
use super::schedule::RewiringSchedule;
use super::state::ConnectionState;

/// What one rewiring pass did, summed over neurons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RewireStats {
    pub regrown: usize,
    pub penalized: usize,
    pub removed: usize,
}

impl std::ops::AddAssign for RewireStats {
    fn add_assign(&mut self, o: Self) {
        self.regrown += o.regrown;
        self.penalized += o.penalized;
        self.removed += o.removed;
    }
}

/// Plain-SGD form of the connection update on active connections:
/// `θ ← θ − η·∂E/∂θ − η·α + η·v`, then every `θ <= 0` goes inactive.
/// Returns the number of connections switched off.
pub fn apply_stochastic_update(
    state: &mut ConnectionState,
    theta_grad: &Array2<f64>,
    sched: &RewiringSchedule,
    rng: &mut RngStream,
) -> Result<usize> {
    state.descend(theta_grad, sched.learning_rate)?;
    state.perturb(sched.learning_rate, sched.reg_coeff, sched.noise_std, rng);
    Ok(state.deactivate_nonpositive())
}

/// Fan-in enforcement after an update at step `t`: neurons short of the
/// target regrow at random; surplus neurons have their weakest connections
/// penalised by `eps2` before the phase boundary and removed after it.
pub fn rewire_sparselut(
    state: &mut ConnectionState,
    sched: &RewiringSchedule,
    t: usize,
    rng: &mut RngStream,
) -> Result<RewireStats> {
    let fine_tuning = sched.in_fine_tuning(t);
    let mut stats = RewireStats::default();
    for j in 0..state.n_out() {
        let r = state.residual(j);
        if r < 0 {
            let k = r.unsigned_abs();
            state.regrow(j, k, sched.eps1, rng)?;
            stats.regrown += k;
        } else if r > 0 {
            let k = r as usize;
            if fine_tuning {
                state.hard_deactivate(j, k)?;
                stats.removed += k;
            } else {
                state.penalize(j, k, sched.eps2)?;
                stats.penalized += k;
            }
        }
    }
    Ok(stats)
}

pub fn sparselut_step(
    state: &mut ConnectionState,
    theta_grad: &Array2<f64>,
    sched: &RewiringSchedule,
    t: usize,
    rng: &mut RngStream,
) -> Result<RewireStats> {
    apply_stochastic_update(state, theta_grad, sched, rng)?;
    rewire_sparselut(state, sched, t, rng)
}

/// Replaces every connection lost since the neuron last held exactly the
/// target fan-in with a uniformly drawn dormant one. A surplus can only come
/// from a state that was never at target and is reported as invalid.
pub fn rewire_deepr_star(
    state: &mut ConnectionState,
    sched: &RewiringSchedule,
    rng: &mut RngStream,
) -> Result<RewireStats> {
    let mut stats = RewireStats::default();
    for j in 0..state.n_out() {
        let r = state.residual(j);
        if r > 0 {
            return Err(Error::invalid_state(format!(
                "neuron {j} holds {r} connections above its fan-in"
            )));
        }
        let k = r.unsigned_abs();
        state.regrow(j, k, sched.eps1, rng)?;
        stats.regrown += k;
    }
    Ok(stats)
}

/// Fixed fan-in rewiring with strict drop/regrow matching. The state must
/// hold exactly the target fan-in on entry.
pub fn deepr_star_step(
    state: &mut ConnectionState,
    theta_grad: &Array2<f64>,
    sched: &RewiringSchedule,
    rng: &mut RngStream,
) -> Result<RewireStats> {
    if let Some(j) = (0..state.n_out()).find(|&j| state.residual(j) != 0) {
        return Err(Error::invalid_state(format!(
            "neuron {j} has {} active connections, expected {}",
            state.active_count(j),
            state.target_fanin()
        )));
    }
    apply_stochastic_update(state, theta_grad, sched, rng)?;
    rewire_deepr_star(state, sched, rng)
}

/// Connectivity `θ > 0`; fails unless every neuron holds exactly its fan-in.
pub fn extract_mask(state: &ConnectionState) -> Result<LayerMask> {
    let target = state.target_fanin();
    if let Some(j) = (0..state.n_out()).find(|&j| state.active_count(j) != target) {
        return Err(Error::invalid_state(format!(
            "neuron {j} has {} active connections, expected {target}",
            state.active_count(j)
        )));
    }
    let on = state.theta().mapv(|t| t > 0.0);
    LayerMask::from_dense(&on)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparsity::{init_connection_state, init_connection_state_scaled};
    use proptest::prelude::*;

    fn sched(total: usize, boundary: usize) -> RewiringSchedule {
        RewiringSchedule {
            total_steps: total,
            phase_boundary: boundary,
            eps1: 1e-12,
            eps2: 5e-5,
            noise_std: 0.0,
            reg_coeff: 0.0,
            learning_rate: 1.0,
        }
    }

    #[test]
    fn quiet_update_changes_nothing() {
        let mut s = init_connection_state(6, 3, 6, 2, &mut RngStream::new(1)).unwrap();
        let before = s.clone();
        let g = Array2::zeros((6, 3));
        let off = apply_stochastic_update(&mut s, &g, &sched(10, 5), &mut RngStream::new(2)).unwrap();
        assert_eq!(off, 0);
        assert_eq!(s, before);
    }

    #[test]
    fn sign_flip_deactivates() {
        let theta = Array2::from_shape_vec((2, 1), vec![0.01, 0.5]).unwrap();
        let mut s = ConnectionState::from_parts(theta, Array2::from_elem((2, 1), 1), 1).unwrap();
        let g = Array2::from_shape_vec((2, 1), vec![0.02, 0.0]).unwrap();
        apply_stochastic_update(&mut s, &g, &sched(10, 5), &mut RngStream::new(0)).unwrap();
        assert!((s.theta()[[0, 0]] + 0.01).abs() < 1e-15);
        assert!(!s.active()[[0, 0]]);
    }

    #[test]
    fn first_fine_tuning_step_is_exact() {
        let mut s = init_connection_state(20, 5, 20, 3, &mut RngStream::new(7)).unwrap();
        let sc = sched(10, 4);
        let mut rng = RngStream::new(8);
        let g = Array2::zeros((20, 5));
        for t in 0..4 {
            sparselut_step(&mut s, &g, &sc, t, &mut rng).unwrap();
            for j in 0..5 {
                assert!(s.active_count(j) >= 3);
            }
        }
        sparselut_step(&mut s, &g, &sc, 4, &mut rng).unwrap();
        for j in 0..5 {
            assert_eq!(s.active_count(j), 3);
        }
        assert_eq!(extract_mask(&s).unwrap().fanin(), 3);
    }

    #[test]
    fn flip_after_boundary_is_regrown_next_step() {
        let mut s = init_connection_state(10, 1, 2, 2, &mut RngStream::new(3)).unwrap();
        let sc = sched(10, 1);
        let mut rng = RngStream::new(4);
        let zero = Array2::zeros((10, 1));
        sparselut_step(&mut s, &zero, &sc, 5, &mut rng).unwrap();
        let victim = (0..10).find(|&i| s.active()[[i, 0]]).unwrap();
        let mut g = Array2::zeros((10, 1));
        g[[victim, 0]] = 100.0;
        // The R < 0 branch of the same pass restores the fan-in.
        let stats = sparselut_step(&mut s, &g, &sc, 6, &mut rng).unwrap();
        assert_eq!(stats.regrown, 1);
        assert_eq!(s.active_count(0), 2);
    }

    #[test]
    fn deepr_star_matches_drops() {
        let theta = Array2::from_shape_vec((5, 1), vec![0.01, 0.02, 0.5, 0.0, 0.0]).unwrap();
        let mut s = ConnectionState::from_parts(theta, Array2::from_elem((5, 1), 1), 3).unwrap();
        let g = Array2::from_shape_vec((5, 1), vec![1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let stats = deepr_star_step(&mut s, &g, &sched(10, 5), &mut RngStream::new(1)).unwrap();
        assert_eq!(stats.regrown, 2);
        assert_eq!(s.active_count(0), 3);

        let before = s.clone();
        let zero = Array2::zeros((5, 1));
        deepr_star_step(&mut s, &zero, &sched(10, 5), &mut RngStream::new(1)).unwrap();
        assert_eq!(s.active(), before.active());
    }

    #[test]
    fn deepr_star_rejects_dense_state() {
        let mut s = init_connection_state(6, 2, 6, 2, &mut RngStream::new(1)).unwrap();
        let g = Array2::zeros((6, 2));
        assert!(deepr_star_step(&mut s, &g, &sched(10, 5), &mut RngStream::new(1)).is_err());
    }

    #[test]
    fn extract_requires_exact_fanin() {
        let s = init_connection_state(6, 2, 6, 2, &mut RngStream::new(1)).unwrap();
        assert!(matches!(extract_mask(&s), Err(Error::InvalidState(_))));
    }

    #[test]
    fn zero_signal_pressure_is_monotone() {
        let mut s = init_connection_state_scaled(40, 6, 40, 4, 0.001, &mut RngStream::new(11)).unwrap();
        let sc = sched(400, 300);
        let g = Array2::zeros((40, 6));
        let mut rng = RngStream::new(12);
        let mut prev = s.total_active();
        for t in 0..300 {
            sparselut_step(&mut s, &g, &sc, t, &mut rng).unwrap();
            let now = s.total_active();
            assert!(now <= prev, "step {t}: {prev} -> {now}");
            prev = now;
        }
        assert!(prev < 40 * 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deepr_star_fanin_every_step(seed in 0u64..1000, n_in in 4usize..24, n_out in 1usize..6, f in 1usize..4) {
            let f = f.min(n_in);
            let mut rng = RngStream::new(seed);
            let mut s = init_connection_state(n_in, n_out, f, f, &mut rng).unwrap();
            let mut sc = sched(1000, 800);
            sc.learning_rate = 0.05;
            sc.noise_std = 0.5;
            for _ in 0..60 {
                let g = crate::math::standard_normal_matrix(n_in, n_out, &mut rng).unwrap();
                deepr_star_step(&mut s, &g, &sc, &mut rng).unwrap();
                for j in 0..n_out {
                    prop_assert_eq!(s.active_count(j), f);
                }
            }
        }
    }
}
