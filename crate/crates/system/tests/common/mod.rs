#![allow(dead_code)]

use chns_fespace::{Discretization, VelocityPressurePair};
use chns_mesh::{Rect, StructuredTriMesh};
use chns_system::State;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn disc(n: usize) -> Discretization {
    disc_with(n, VelocityPressurePair::default())
}

pub fn disc_with(n: usize, pair: VelocityPressurePair) -> Discretization {
    let mesh = StructuredTriMesh::build(Rect::centered_unit(), n, n).unwrap();
    Discretization::new(mesh, pair).unwrap()
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Random velocity with zero boundary coefficients.
pub fn random_velocity(d: &Discretization, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    let mut u = vec![0.0; d.velocity.dof_count()];
    for &i in &d.free_velocity {
        u[i] = rng.gen_range(-scale..scale);
    }
    u
}

/// Random phase in `[lo, hi]` elementwise.
pub fn random_phase(d: &Discretization, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<f64> {
    uniform(rng, lo, hi, d.p0.dof_count())
}

pub fn random_state(d: &Discretization, rng: &mut ChaCha8Rng) -> State {
    let u = random_velocity(d, rng, 1.0);
    let p = uniform(rng, -1.0, 1.0, d.pressure.dof_count());
    let phi = random_phase(d, rng, -0.95, 0.95);
    let mu = uniform(rng, -1.0, 1.0, d.p1.dof_count());
    State::new(d, u, p, phi, mu).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300) || (a - b).abs() < 1e-300
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}
