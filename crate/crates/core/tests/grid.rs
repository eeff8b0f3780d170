use ksns::grid::{divergence, gradient, integrate, laplacian, GridSpec, ScalarField, VectorField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_grid(periodic: bool) -> impl Strategy<Value = GridSpec> {
    (2usize..=3, 2usize..9, 2usize..9, 2usize..6, 0.5f64..3.0, 0.5f64..3.0, 0.5f64..3.0).prop_map(
        move |(dims, a, b, c, la, lb, lc)| {
            let cells = [a, b, c];
            let lengths = [la, lb, lc];
            let (s, v) = if periodic {
                (ksns::ScalarBc::Periodic, ksns::VelocityBc::Periodic)
            } else {
                (ksns::ScalarBc::Neumann, ksns::VelocityBc::NoSlip)
            };
            GridSpec::new(dims, &cells[..dims], &lengths[..dims], s, v).unwrap()
        },
    )
}

fn random_scalar(g: &GridSpec, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::from_values(g, (0..g.num_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn random_vector(g: &GridSpec, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = (0..g.dims())
        .map(|d| (0..g.num_faces(d)).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut v = VectorField::from_components(g, comps).unwrap();
    v.zero_wall_faces();
    v
}

proptest! {
    #[test]
    fn gradient_and_divergence_are_adjoint(
        periodic in any::<bool>(),
        seed in any::<u64>(),
        g in arb_grid(false),
        gp in arb_grid(true),
    ) {
        let g = if periodic { gp } else { g };
        let f = random_scalar(&g, seed);
        let v = random_vector(&g, seed ^ 0x9e37);
        let lhs = f.dot(&divergence(&v));
        let rhs = -gradient(&f).dot(&v);
        let scale = f.dot(&f).sqrt() * v.norm_l2() / g.min_h();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn neumann_laplacian_has_zero_integral(seed in any::<u64>(), g in arb_grid(false)) {
        let f = random_scalar(&g, seed);
        let total = integrate(&laplacian(&f));
        let scale = f.values().iter().map(|x| x.abs()).sum::<f64>() * g.cell_volume() / (g.min_h() * g.min_h());
        prop_assert!(total.abs() <= 1e-12 * scale);
    }

    #[test]
    fn div_grad_is_the_laplacian(periodic in any::<bool>(), seed in any::<u64>(), g in arb_grid(false), gp in arb_grid(true)) {
        let g = if periodic { gp } else { g };
        let f = random_scalar(&g, seed);
        let a = divergence(&gradient(&f));
        let b = laplacian(&f);
        prop_assert_eq!(a.values(), b.values());
    }

    /// Hölder: `|∫fg| ≤ ‖f‖_p ‖g‖_{p'}` for the discrete norms.
    #[test]
    fn holder_inequality(seed in any::<u64>(), p in 1.05f64..8.0, g in arb_grid(false)) {
        let abs = |f: ScalarField| ScalarField::from_values(&g, f.values().iter().map(|x| x.abs()).collect()).unwrap();
        let f = abs(random_scalar(&g, seed));
        let h = abs(random_scalar(&g, seed.wrapping_add(1)));
        let q = p / (p - 1.0);
        let fg = ScalarField::from_values(&g, f.values().iter().zip(h.values()).map(|(a, b)| a * b).collect()).unwrap();
        let lhs = integrate(&fg).abs();
        let rhs = ksns::diagnostics::lp_norm(&f, p).unwrap() * ksns::diagnostics::lp_norm(&h, q).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-12));
    }
}
