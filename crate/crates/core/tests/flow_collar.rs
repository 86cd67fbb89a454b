//! Flow and collar properties on a perturbed action.

use barycentric_flow::cli::scenario::Scenario;
use barycentric_flow::collar::{find_level, product_map};
use barycentric_flow::flow::{
    flow_length, flow_to, integrate, limit_point, FlowParams, DEFAULT_STEP,
};
use barycentric_flow::group_action::GroupAction;
use barycentric_flow::sampling::rng;
use barycentric_flow::{Point, K_PRIME, TAU};

fn perturbed() -> GroupAction {
    let path = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/scenarios/flat_perturbed_eps4000.scn"
    );
    Scenario::load(path.as_ref())
        .unwrap()
        .build_action()
        .unwrap()
}

fn samples(a: &GroupAction, radius: f64, n: usize, seed: u64) -> Vec<Point> {
    a.sample_shell(radius, n, &mut rng(seed))
}

fn dist(a: &GroupAction, p: &Point, q: &Point) -> f64 {
    a.manifold().distance(p, q).unwrap()
}

#[test]
fn semigroup_law() {
    let a = perturbed();
    for x in samples(&a, 0.1, 10, 1) {
        for (s, t) in [(0.2, 0.4), (0.5, 1.0), (1.3, 0.7)] {
            let two = flow_to(
                &a,
                &flow_to(&a, &x, t, DEFAULT_STEP).unwrap(),
                s,
                DEFAULT_STEP,
            )
            .unwrap();
            let one = flow_to(&a, &x, s + t, DEFAULT_STEP).unwrap();
            assert!(dist(&a, &one, &two) <= 5e-8, "s={s} t={t}");
        }
    }
}

#[test]
fn flow_length_decreases_along_the_flow() {
    let a = perturbed();
    for x in samples(&a, 0.1, 8, 2) {
        let mut prev = flow_length(&a, &x, TAU, K_PRIME).unwrap().length;
        for t in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let y = flow_to(&a, &x, t, DEFAULT_STEP).unwrap();
            let l = flow_length(&a, &y, TAU, K_PRIME).unwrap().length;
            assert!(l < prev, "t={t}: {l} !< {prev}");
            prev = l;
        }
    }
}

#[test]
fn length_bounds_distance_to_limit() {
    // the flow line is a path from x to its limit, so d(x, x*) <= l(x)
    let a = perturbed();
    for x in samples(&a, 0.2, 10, 3) {
        let l = flow_length(&a, &x, TAU, K_PRIME).unwrap().length;
        let (x_star, _) = limit_point(&a, &x, 1e-10).unwrap();
        assert!(dist(&a, &x, &x_star) <= l * (1.0 + 1e-9));
    }
}

#[test]
fn convergence_is_uniform_over_the_shell() {
    // sup over samples of d(φ_T x, x*) shrinks geometrically in T
    let a = perturbed();
    let xs = samples(&a, 0.2, 20, 4);
    let limits: Vec<Point> = xs
        .iter()
        .map(|x| limit_point(&a, x, 1e-10).unwrap().0)
        .collect();
    let sup = |t: f64| {
        xs.iter()
            .zip(&limits)
            .map(|(x, s)| dist(&a, &flow_to(&a, x, t, DEFAULT_STEP).unwrap(), s))
            .fold(0.0, f64::max)
    };
    let (s2, s4, s8) = (sup(2.0), sup(4.0), sup(8.0));
    assert!(s4 <= s2 * K_PRIME.powi(10));
    assert!(s8 <= s4 * K_PRIME.powi(20));
    assert!(s8 <= 0.2 * 1e-3);
}

#[test]
fn same_flow_line_gives_same_level_point() {
    let a = perturbed();
    for x in samples(&a, 0.2, 5, 5) {
        let l = flow_length(&a, &x, TAU, K_PRIME).unwrap().length;
        let b = 0.3 * l;
        let later = flow_to(&a, &x, 0.5, DEFAULT_STEP).unwrap();
        let p = find_level(&a, &x, b, TAU, K_PRIME).unwrap();
        let q = find_level(&a, &later, b, TAU, K_PRIME).unwrap();
        assert!(dist(&a, &p.point, &q.point) <= 1e-6);
        assert!((p.t_star - q.t_star - 0.5).abs() <= 1e-6);
    }
}

#[test]
fn product_map_parameters() {
    let a = perturbed();
    let x = &samples(&a, 0.1, 1, 6)[0];
    let b = 0.5 * flow_length(&a, x, TAU, K_PRIME).unwrap().length;
    let z = find_level(&a, x, b, TAU, K_PRIME).unwrap().point;
    assert_eq!(product_map(&a, &z, 0.0).unwrap(), z);
    let half = product_map(&a, &z, 0.5).unwrap();
    assert!(dist(&a, &half, &flow_to(&a, &z, 1.0, DEFAULT_STEP).unwrap()) <= 1e-12);
    assert!(product_map(&a, &z, 1.0).is_err());
}

#[test]
fn product_map_tail_approaches_the_limit() {
    // Ψ(z, 1 − 1/n) = φ_{n−1}(z); its distance to z* sits under the speed
    // envelope ‖v(z)‖·k^⌊(n−1)/τ⌋·τ/(1−k) and decreases in n
    let a = perturbed();
    let x = &samples(&a, 0.1, 1, 7)[0];
    let b = 0.5 * flow_length(&a, x, TAU, K_PRIME).unwrap().length;
    let z = find_level(&a, x, b, TAU, K_PRIME).unwrap().point;
    let (z_star, _) = limit_point(&a, &z, 1e-10).unwrap();
    let traj = integrate(&a, &z, &FlowParams::default()).unwrap();
    let v0 = traj.samples[0].speed;
    let mut prev = f64::INFINITY;
    for n in [2.0, 4.0, 8.0, 16.0] {
        let p = product_map(&a, &z, 1.0 - 1.0 / n).unwrap();
        let d = dist(&a, &p, &z_star);
        let envelope = v0 * K_PRIME.powi(((n - 1.0) / TAU).floor() as i32) * TAU / (1.0 - K_PRIME);
        assert!(d <= envelope, "n={n}: {d} > {envelope}");
        assert!(d < prev || d <= 1e-10, "n={n}");
        prev = d;
    }
}

#[test]
fn product_map_is_injective_on_a_grid() {
    let a = perturbed();
    let xs = samples(&a, 0.1, 12, 8);
    let b = 0.5
        * xs.iter()
            .map(|x| flow_length(&a, x, TAU, K_PRIME).unwrap().length)
            .fold(f64::INFINITY, f64::min);
    let mut zs: Vec<Point> = Vec::new();
    for x in &xs {
        let z = find_level(&a, x, b, TAU, K_PRIME).unwrap().point;
        if zs.iter().all(|w| dist(&a, w, &z) >= 1e-4) {
            zs.push(z);
        }
    }
    assert!(zs.len() >= 6);
    let mut images = Vec::new();
    for z in &zs {
        for t in [0.0, 0.25, 0.5, 0.75] {
            images.push(product_map(&a, z, t).unwrap());
        }
    }
    for i in 0..images.len() {
        for j in 0..i {
            assert!(dist(&a, &images[i], &images[j]) >= 1e-9, "{i} {j}");
        }
    }
}
