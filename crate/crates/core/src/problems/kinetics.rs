//! Robertson chemical kinetics and its stiff reference integrator.

use rand::Rng;

pub const K1: f64 = 0.04;
pub const K2: f64 = 1e4;
pub const K3: f64 = 3e7;

/// Step size and step count used for generated datasets.
pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_STEPS: u64 = 10_000;
/// Reference sub-steps per requested step.
pub const DEFAULT_SUBSTEPS: u32 = 4;

const NEWTON_MAX_ITER: usize = 50;
const NEWTON_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticsState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl KineticsState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        KineticsState { x, y, z }
    }

    pub fn sum(&self) -> f64 {
        self.x + self.y + self.z
    }

    fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Right-hand side of the Robertson system.
pub fn robertson_rhs(s: &KineticsState) -> (f64, f64, f64) {
    let dx = -K1 * s.x + K2 * s.y * s.z;
    let dy = K1 * s.x - K2 * s.y * s.z - K3 * s.y * s.y;
    let dz = K3 * s.y * s.y;
    (dx, dy, dz)
}

fn jacobian(u: &[f64; 3]) -> [[f64; 3]; 3] {
    let [_, y, z] = *u;
    [
        [-K1, K2 * z, K2 * y],
        [K1, -K2 * z - 2.0 * K3 * y, -K2 * y],
        [0.0, 2.0 * K3 * y, 0.0],
    ]
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonConvergence {
    pub step: u64,
}

/// One backward Euler step of size `h`, solved by Newton iteration.
pub fn backward_euler_step(s: &KineticsState, h: f64) -> Option<KineticsState> {
    let prev = s.to_array();
    let mut u = prev;
    for _ in 0..NEWTON_MAX_ITER {
        let (fx, fy, fz) = robertson_rhs(&KineticsState::new(u[0], u[1], u[2]));
        let f = [fx, fy, fz];
        let residual = [0, 1, 2].map(|i| -(u[i] - prev[i] - h * f[i]));
        let jf = jacobian(&u);
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - h * jf[i][j];
            }
        }
        let delta = solve3(m, residual)?;
        let mut converged = true;
        for i in 0..3 {
            u[i] += delta[i];
            if delta[i].abs() > NEWTON_TOL * (1.0 + u[i].abs()) {
                converged = false;
            }
        }
        if !u.iter().all(|v| v.is_finite()) {
            return None;
        }
        if converged {
            return Some(KineticsState::new(u[0], u[1], u[2]));
        }
    }
    None
}

/// Advances `n_steps` steps of size `dt`, each split into `substeps`
/// backward Euler steps.
pub fn integrate(
    initial: KineticsState,
    dt: f64,
    n_steps: u64,
    substeps: u32,
) -> Result<KineticsState, NonConvergence> {
    let h = dt / f64::from(substeps.max(1));
    let mut s = initial;
    for step in 0..n_steps {
        for _ in 0..substeps.max(1) {
            s = backward_euler_step(&s, h).ok_or(NonConvergence { step })?;
        }
    }
    Ok(s)
}

/// Admissible random initial condition: mostly reactant x, traces of the
/// intermediate y, some product z.
pub fn sample_initial<R: Rng>(rng: &mut R) -> KineticsState {
    KineticsState::new(
        rng.random_range(0.5..1.0),
        rng.random_range(0.0..1e-4),
        rng.random_range(0.0..0.5),
    )
}

/// Initial conditions with their reference final states. Conditions whose
/// integration fails are replaced by fresh samples.
pub fn generate_kinetics_truth<R: Rng>(
    rng: &mut R,
    n_conditions: usize,
    dt: f64,
    n_steps: u64,
    substeps: u32,
) -> Vec<(KineticsState, KineticsState)> {
    let mut out = Vec::with_capacity(n_conditions);
    while out.len() < n_conditions {
        let init = sample_initial(rng);
        match integrate(init, dt, n_steps, substeps) {
            Ok(fin) => out.push((init, fin)),
            Err(e) => log::warn!("rejecting initial condition {init:?}: Newton failed at step {}", e.step),
        }
    }
    out
}

/// Candidate input row: `x,y,z,dt,n_steps`.
pub fn input_row(s: &KineticsState, dt: f64, n_steps: u64) -> Vec<f64> {
    vec![s.x, s.y, s.z, dt, n_steps as f64]
}

pub fn output_row(s: &KineticsState) -> Vec<f64> {
    vec![s.x, s.y, s.z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rhs_worked_examples() {
        assert_eq!(robertson_rhs(&KineticsState::new(1.0, 0.0, 0.0)), (-0.04, 0.04, 0.0));
        let (dx, dy, dz) = robertson_rhs(&KineticsState::new(0.0, 1e-3, 0.0));
        assert_eq!(dx, 0.0);
        assert!((dy + 30.0).abs() < 1e-9 && (dz - 30.0).abs() < 1e-9);
    }

    #[test]
    fn zero_steps_is_identity() {
        let s = KineticsState::new(0.7, 1e-5, 0.2);
        assert_eq!(integrate(s, 1e-4, 0, 4).unwrap(), s);
    }

    #[test]
    fn solve3_matches_known_solution() {
        let a = [[2.0, 1.0, -1.0], [-3.0, -1.0, 2.0], [-2.0, 1.0, 2.0]];
        let x = solve3(a, [8.0, -11.0, -3.0]).unwrap();
        for (got, want) in x.iter().zip([2.0, 3.0, -1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(solve3([[0.0; 3]; 3], [1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn reaches_quasi_steady_intermediate() {
        // y settles near its small quasi-steady value within the first
        // fraction of a time unit regardless of where it starts.
        let fin = integrate(KineticsState::new(1.0, 0.0, 0.0), 1e-4, 10_000, 4).unwrap();
        assert!(fin.y > 1e-6 && fin.y < 1e-4, "{fin:?}");
        assert!(fin.x < 1.0 && fin.x > 0.9);
    }

    #[test]
    fn generated_truth_is_seeded() {
        let a = generate_kinetics_truth(&mut ChaCha8Rng::seed_from_u64(3), 3, 1e-3, 50, 2);
        let b = generate_kinetics_truth(&mut ChaCha8Rng::seed_from_u64(3), 3, 1e-3, 50, 2);
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn rhs_sums_to_zero(x in 0.0f64..1.0, y in 0.0f64..1e-3, z in 0.0f64..1.0) {
            let (dx, dy, dz) = robertson_rhs(&KineticsState::new(x, y, z));
            let scale = dx.abs().max(dy.abs()).max(dz.abs()).max(1.0);
            prop_assert!((dx + dy + dz).abs() <= 1e-12 * scale);
        }

        #[test]
        fn step_conserves_mass_and_positivity(x in 0.5f64..1.0, y in 0.0f64..1e-4, z in 0.0f64..0.5) {
            let s = KineticsState::new(x, y, z);
            let n = backward_euler_step(&s, 2.5e-5).unwrap();
            prop_assert!((n.sum() - s.sum()).abs() <= 1e-14);
            prop_assert!(n.x >= 0.0 && n.y >= 0.0 && n.z >= 0.0);
        }
    }
}
