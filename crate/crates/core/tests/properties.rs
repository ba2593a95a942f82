use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use spinboson::ansatz::{coherent_overlap, expect_sigma_z, observables, AnsatzVariant, MultiDState};
use spinboson::eom::{assemble_eom, uniform_grid};
use spinboson::model::{discretize_bath, spectral_density, DiscretizedBath, SpectralDensityParams, SystemParams};
use spinboson::oracle::{fock_expectations, fock_propagate_vector, multid_to_fock, FockMethod};
use spinboson::sampler::{draw_initial, AnsatzSpec, ThermalSampleConfig};
use spinboson::{RunConfig, C64};

fn complex(radius: f64) -> impl Strategy<Value = C64> {
    (-radius..radius, -radius..radius).prop_map(|(re, im)| C64::new(re, im))
}

fn state(variant: AnsatzVariant, m: usize, n_b: usize, radius: f64) -> impl Strategy<Value = MultiDState> {
    let g_len = match variant {
        AnsatzVariant::D1 => m * n_b,
        AnsatzVariant::D2 => 0,
    };
    (
        prop::collection::vec(complex(1.0), m),
        prop::collection::vec(complex(1.0), m),
        prop::collection::vec(complex(radius), m * n_b),
        prop::collection::vec(complex(radius), g_len),
    )
        .prop_filter("nonzero amplitudes", |(a, b, _, _)| {
            a.iter().chain(b).map(|z| z.norm_sqr()).sum::<f64>() > 1e-2
        })
        .prop_map(move |(a, b, f, g)| MultiDState {
            variant,
            m,
            n_b,
            a,
            b,
            f,
            g,
        })
}

fn any_state(n_b: usize, radius: f64) -> impl Strategy<Value = MultiDState> {
    (prop_oneof![Just(AnsatzVariant::D1), Just(AnsatzVariant::D2)], 1usize..=3)
        .prop_flat_map(move |(v, m)| state(v, m, n_b, radius))
}

fn small_bath(n_b: usize) -> impl Strategy<Value = DiscretizedBath> {
    (prop::collection::vec(0.2f64..2.0, n_b), prop::collection::vec(-0.3f64..0.3, n_b))
        .prop_map(|(w, l)| DiscretizedBath::from_modes(w, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discretization_identities(s in 0.3f64..2.0, alpha in 0.001f64..0.5, n_b in 1usize..300) {
        let bath = discretize_bath(&SpectralDensityParams::new(s, alpha, n_b).unwrap()).unwrap();
        let gamma = bath.gamma_norm;
        for (w, l) in bath.omegas.iter().zip(&bath.lambdas) {
            prop_assert!((l * l - gamma * w).abs() <= 1e-14 * gamma * w);
        }
        prop_assert!(bath.omegas.windows(2).all(|p| p[1] > p[0]));
        prop_assert!((bath.reorganization_sum() - n_b as f64 * gamma).abs() <= 1e-12 * n_b as f64 * gamma);
        prop_assert!((bath.omegas[n_b - 1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn spectral_density_is_nonnegative(s in 0.1f64..3.0, alpha in 0.0f64..1.0, w in 0.0f64..50.0) {
        let p = SpectralDensityParams::new(s, alpha, 1).unwrap();
        prop_assert!(spectral_density(w, &p).unwrap() >= 0.0);
    }

    #[test]
    fn sigma_z_is_bounded(st in any_state(4, 2.0)) {
        let sz = expect_sigma_z(&st).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&sz));
    }

    #[test]
    fn overlap_is_conjugate_symmetric(f in prop::collection::vec(complex(2.0), 5), g in prop::collection::vec(complex(2.0), 5)) {
        let a = coherent_overlap(&f, &g).unwrap();
        let b = coherent_overlap(&g, &f).unwrap();
        prop_assert!((a - b.conj()).norm() < 1e-14);
        prop_assert!(a.norm() <= 1.0 + 1e-14);
    }

    #[test]
    fn overlap_gram_is_psd(rows in prop::collection::vec(prop::collection::vec(complex(1.5), 3), 1..6)) {
        let n = rows.len();
        let gram = DMatrix::from_fn(n, n, |i, j| coherent_overlap(&rows[i], &rows[j]).unwrap());
        prop_assert!((&gram - gram.adjoint()).norm() < 1e-13);
        let eig = SymmetricEigen::new(gram);
        prop_assert!(eig.eigenvalues.iter().all(|l| *l > -1e-12));
    }

    #[test]
    fn metric_is_hermitian_psd(st in any_state(3, 1.0), bath in small_bath(3)) {
        let sys = SystemParams::new(0.1, 0.2).unwrap();
        let (k, _) = assemble_eom(&st, &sys, &bath).unwrap();
        let trace: f64 = (0..k.nrows()).map(|i| k[(i, i)].re).sum();
        prop_assert!((&k - k.adjoint()).norm() <= 1e-12 * trace);
        let eig = SymmetricEigen::new(k);
        prop_assert!(eig.eigenvalues.iter().all(|l| *l >= -1e-10 * trace));
    }

    #[test]
    fn sample_draws_do_not_depend_on_ensemble_size(seed in any::<u64>(), idx in 0usize..50, extra in 1usize..100) {
        let bath = discretize_bath(&SpectralDensityParams::new(1.0, 0.05, 8).unwrap()).unwrap();
        let spec = AnsatzSpec { variant: AnsatzVariant::D1, m: 2 };
        let small = ThermalSampleConfig::new(0.2, &bath, 50, 0.01, seed).unwrap();
        let large = ThermalSampleConfig::new(0.2, &bath, 50 + extra, 0.01, seed).unwrap();
        prop_assert_eq!(draw_initial(&small, spec, idx), draw_initial(&large, spec, idx));
    }

    #[test]
    fn config_round_trip_is_idempotent(
        temperature in 0.0f64..1.0,
        s in 0.3f64..2.0,
        n_b in 1i64..400,
        m in 1i64..6,
        n_s in 1i64..1000,
        seed in 0..=spinboson::config::MAX_SEED,
        d2 in any::<bool>(),
    ) {
        let text = format!(
            "temperature = {temperature}\n[bath]\ns = {s}\nn_b = {n_b}\n[ansatz]\nvariant = \"{}\"\nmultiplicity = {m}\n[sampling]\nn_s = {n_s}\nmaster_seed = {seed}\n",
            if d2 { "D2" } else { "D1" }
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let once = cfg.to_toml();
        let again = RunConfig::parse(&once).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(once, again.to_toml());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn expectations_match_fock_brute_force(
        st in (1usize..=2).prop_flat_map(|n_b| any_state(n_b, 1.5)),
        eps in -0.5f64..0.5,
    ) {
        let n_b = st.n_b;
        let bath = DiscretizedBath::from_modes(vec![0.7; n_b], vec![0.25; n_b]).unwrap();
        let sys = SystemParams::new(eps, 0.3).unwrap();
        let n_max = vec![25; n_b];
        let psi = multid_to_fock(&st, &n_max).unwrap();
        let exact = fock_expectations(&psi, &sys, &bath, &n_max).unwrap();
        let var = observables(&st, &sys, &bath).unwrap();
        prop_assert!((var.norm - exact.norm).abs() <= 1e-9 * exact.norm);
        prop_assert!((var.sigma_z - exact.sigma_z).abs() <= 1e-9);
        prop_assert!((var.energy - exact.energy).abs() <= 1e-9 * exact.energy.abs().max(1.0));
    }

    #[test]
    fn oracle_propagation_is_unitary(st in any_state(2, 0.8), bath in small_bath(2), eps in -0.3f64..0.3) {
        let sys = SystemParams::new(eps, 0.2).unwrap();
        let n_max = vec![14, 14];
        let psi = multid_to_fock(&st, &n_max).unwrap();
        let grid = uniform_grid(10.0, 2.0);
        let r = fock_propagate_vector(&sys, &bath, &psi, &n_max, 0.5, FockMethod::Chebyshev, &grid).unwrap();
        for k in 0..grid.len() {
            prop_assert!((r.norm[k] - r.norm[0]).abs() <= 1e-10 * r.norm[0]);
            prop_assert!((r.energy[k] - r.energy[0]).abs() <= 1e-10 * r.energy[0].abs().max(1.0));
            prop_assert!(r.pz[k].abs() <= 1.0 + 1e-12);
        }
    }
}

#[test]
fn seeds_beyond_toml_range_are_rejected() {
    let mut cfg = RunConfig::parse("temperature = 0.1\n[bath]\ns = 1.0\n").unwrap();
    cfg.sampling.master_seed = spinboson::config::MAX_SEED + 1;
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("sampling.master_seed"), "{err}");
}
