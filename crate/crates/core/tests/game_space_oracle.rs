//! Closed-form game quantities against direct simulation of the linear
//! engagement model.

use std::time::Instant;

mod common;

use common::{draw_params, terminal_miss};
use kpm_core::game_space::zem_dimensional;
use kpm_core::{GamePoint, GameSpace, Region};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn zem_matches_zero_control_simulation() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = draw_params(&mut rng);
        let x0 = [
            rng.random_range(-20.0..20.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-1.0..1.0) * p.a_t_max,
            rng.random_range(-1.0..1.0) * p.a_m_max(),
        ];
        let t_go = rng.random_range(0.0..3.0);
        let closed = zem_dimensional(x0[0], x0[1], x0[3], x0[2], t_go, &p).unwrap();
        let simulated = terminal_miss(x0, 0.0, 0.0, t_go, &p);
        worst = worst.max((closed - simulated).abs());
        assert!((closed - simulated).abs() < 1e-6, "{closed} vs {simulated}");
    }
    println!("worst ZEM error {worst:e} m in {:?}", start.elapsed());
}

#[test]
fn miss_value_matches_bang_bang_play() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA9);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 1000 {
        let p = draw_params(&mut rng);
        let game = GameSpace::new(p).unwrap();
        let t_go = rng.random_range(0.01..3.0);
        let tau = t_go / p.tau_m;
        let scale = p.length_scale();
        // Lateral offset and closing lags chosen so the point is regular.
        let x0 = [
            0.0,
            rng.random_range(-80.0..80.0),
            rng.random_range(-1.0..1.0) * p.a_t_max,
            rng.random_range(-1.0..1.0) * p.a_m_max(),
        ];
        let zem = zem_dimensional(x0[0], x0[1], x0[3], x0[2], t_go, &p).unwrap();
        let point = GamePoint::new(zem / scale, tau);
        if game.classify(point) == Region::Singular || zem == 0.0 {
            continue;
        }
        let s = zem.signum();
        let simulated = terminal_miss(x0, s * p.a_m_max(), s * p.a_t_max, t_go, &p).abs();
        let value = game.miss_value(point);
        worst = worst.max((value - simulated).abs());
        assert!((value - simulated).abs() < 1e-4, "value {value} vs simulated {simulated} at {point:?}");
        checked += 1;
    }
    println!("worst value error {worst:e} m in {:?}", start.elapsed());
}

#[test]
fn singular_value_is_the_boundary_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = draw_params(&mut rng);
        let game = GameSpace::new(p).unwrap();
        let tau = game.tau_s() + rng.random_range(0.1..10.0);
        let edge = game.boundary_or_zero(tau);
        let inside = GamePoint::new(edge * rng.random_range(-0.99..0.99), tau);
        assert_eq!(game.classify(inside), Region::Singular);
        let on_edge = game.miss_value(GamePoint::new(edge, tau));
        assert!((game.miss_value(inside) - on_edge).abs() < 1e-9 * (1.0 + on_edge));
        assert!((game.singular_value() - on_edge).abs() < 1e-9 * (1.0 + on_edge));
    }
}
