use diabatherm_core::couplings::{alpha_for_axial, detuning_from_com, solve_trap, tune_axial_for_alpha, CouplingSign};
use diabatherm_core::trap::{lamb_dicke, TrapSpec};
use nalgebra::DMatrix;

const AXIAL_BAND: [f64; 2] = [620e3, 950e3];

#[test]
fn positions_are_reflection_symmetric_and_balanced() {
    for n in [2, 5, 6, 10, 12] {
        let sol = solve_trap(&TrapSpec::ytterbium(n, 800e3)).unwrap();
        let x = &sol.chain.positions;
        for i in 0..n {
            assert!((x[i] + x[n - 1 - i]).abs() < 1e-10, "n = {n}");
        }
        for i in 0..n {
            let coulomb: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| (x[i] - x[j]).signum() / (x[i] - x[j]).powi(2))
                .sum();
            assert!((x[i] - coulomb).abs() < 1e-10, "force balance, n = {n}, ion {i}");
        }
    }
}

#[test]
fn transverse_modes_are_orthonormal_with_com_on_top() {
    for n in [6, 10, 12] {
        let spec = TrapSpec::ytterbium(n, 750e3);
        let sol = solve_trap(&spec).unwrap();
        let b = &sol.modes.mode_matrix;
        let gram = b.transpose() * b;
        assert!((gram - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-10);
        assert!((sol.modes.frequencies[0] - spec.omega_transverse).abs() < 1e-6 * spec.omega_transverse);
        assert!(sol.modes.frequencies.windows(2).all(|w| w[0] >= w[1]));
        let com = 1.0 / (n as f64).sqrt();
        assert!((0..n).all(|i| (b[(i, 0)].abs() - com).abs() < 1e-10));
    }
}

#[test]
fn detuning_matches_the_quoted_experimental_numbers() {
    let spec = TrapSpec::ytterbium(10, 800e3);
    let eta = lamb_dicke(&spec).unwrap();
    assert!((eta - 0.0621).abs() < 5e-4, "eta = {eta}");
    let mu = detuning_from_com(&spec).unwrap();
    assert!((mu / spec.omega_transverse - 1.0233).abs() < 1e-3);
}

#[test]
fn ferromagnetic_couplings_are_positive_and_afm_is_the_negation() {
    let sol = solve_trap(&TrapSpec::ytterbium(8, 800e3)).unwrap();
    let fm = &sol.couplings;
    assert!(fm.is_sign_uniform());
    assert!((0..8).all(|i| (i + 1..8).all(|j| fm.get(i, j) > 0.0)));
    let afm = fm.with_sign(CouplingSign::Antiferromagnetic);
    assert_eq!(afm.values, -&fm.values);
    assert_eq!(afm.j0_nn, fm.j0_nn);
    assert!(fm.reflection_asymmetry() < 1e-10);
}

#[test]
fn axial_band_gives_the_working_regime() {
    for n in [6, 8, 10, 12] {
        let mut last = f64::INFINITY;
        for k in 0..=6 {
            let w = AXIAL_BAND[0] + (AXIAL_BAND[1] - AXIAL_BAND[0]) * k as f64 / 6.0;
            let sol = match solve_trap(&TrapSpec::ytterbium(n, w)) {
                Ok(s) => s,
                Err(_) if n == 12 => continue,
                Err(e) => panic!("n = {n}, axial = {w}: {e}"),
            };
            let alpha = sol.couplings.fit.unwrap().alpha;
            if n >= 10 {
                assert!((0.6..=1.3).contains(&alpha), "n = {n}, axial = {w}: alpha = {alpha}");
            }
            assert!(alpha < last, "alpha must fall as the axial trap stiffens");
            last = alpha;
            let j = sol.couplings.j0_nn;
            assert!((1e3 / 3.0..=3e3).contains(&j), "n = {n}: J_nn = {j}");
        }
    }
}

#[test]
fn tuner_lands_on_the_requested_exponent() {
    let base = TrapSpec::ytterbium(10, 800e3);
    for target in [0.76, 1.0, 1.2] {
        let w = tune_axial_for_alpha(&base, target).unwrap();
        let got = alpha_for_axial(&base, w).unwrap();
        assert!((got - target).abs() < 1e-4, "target {target}, got {got} at {w} Hz");
    }
}
