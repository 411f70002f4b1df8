use korteweg::grid::Grid;
use korteweg::harness::io::{parse_mask, write_mask, Field};
use korteweg::nonlocal::{capillarity, convolve_wall, fluid_weight, make_kernel, ConvMethod};
use proptest::prelude::*;

fn field_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, n * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_roundtrip_is_bitwise(n in 1usize..12, t in 0.0f64..10.0, comment in "[a-z=0-9. ]{0,20}", seed in 0u64..1000) {
        let grid = Grid::unit(n);
        let values: Vec<f64> = (0..n * n).map(|k| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 7.0 - 50.0).collect();
        let f = Field::new("rho", &grid, t, comment.trim(), values);
        let back = Field::from_bytes(&f.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn mask_roundtrip(n in 1usize..16, bits in prop::collection::vec(any::<bool>(), 256)) {
        let grid = Grid::unit(n);
        let fluid = bits[..n * n].to_vec();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.mask");
        write_mask(&p, &grid, &fluid).unwrap();
        let (nx, ny, h, back) = parse_mask(&std::fs::read(&p).unwrap()).unwrap();
        prop_assert_eq!((nx, ny), (n, n));
        prop_assert_eq!(h, grid.h);
        prop_assert_eq!(back, fluid);
    }

    #[test]
    fn wall_convolution_is_affine_and_methods_agree(
        a in field_values(24),
        b in field_values(24),
        s in -3.0f64..3.0,
        bits in prop::collection::vec(prop::bool::weighted(0.8), 24 * 24),
    ) {
        let grid = Grid::unit(24);
        let k = make_kernel(0.15, grid.h).unwrap();
        let rho_s = 0.5;
        let conv = |r: &[f64], m| convolve_wall(r, &bits, &grid, &k, rho_s, m);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * y).collect();
        let (ca, cb, cm) = (conv(&a, ConvMethod::Direct), conv(&b, ConvMethod::Direct), conv(&mix, ConvMethod::Direct));
        let cf = conv(&mix, ConvMethod::Fft);
        let wt = fluid_weight(&bits, &grid, &k, ConvMethod::Direct);
        let scale = 1e3 * (1.0 + s.abs());
        for c in 0..grid.len() {
            // phi *_X (a + s b) = phi *_X a + s (phi *_X b - rho_s + rho_s phi * 1_X)
            let lin = ca[c] + s * (cb[c] - rho_s + rho_s * wt[c]);
            prop_assert!((cm[c] - lin).abs() <= 1e-11 * scale);
            prop_assert!((cm[c] - cf[c]).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn wall_density_has_no_capillarity(n in 10usize..24, rho_s in 0.1f64..2.0, bits in prop::collection::vec(any::<bool>(), 24 * 24)) {
        let grid = Grid::unit(n);
        let k = make_kernel(0.2, grid.h).unwrap();
        let fluid = bits[..n * n].to_vec();
        let d = capillarity(&vec![rho_s; n * n], &fluid, &grid, &k, rho_s, ConvMethod::Auto);
        prop_assert!(d.iter().all(|v| v.abs() <= 1e-12 * rho_s));
    }
}
