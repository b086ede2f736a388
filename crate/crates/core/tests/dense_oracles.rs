use diabatherm_core::couplings::{solve_trap, CouplingMatrix, CouplingSign};
use diabatherm_core::evolve::{evolve, initial_state, QuantumState, RampSchedule};
use diabatherm_core::obs::eigenstate_probabilities;
use diabatherm_core::spin::{build_hamiltonian, diagonalize_with_symmetries, IsingHamiltonian};
use diabatherm_core::trap::TrapSpec;
use diabatherm_core::C64;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn sigma_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

fn sigma_x() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

/// `op` on `site`, identity elsewhere; site 0 is the rightmost factor.
fn embed(n: usize, site: usize, op: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(1, 1, 1.0);
    for s in (0..n).rev() {
        let f = if s == site { op.clone() } else { DMatrix::identity(2, 2) };
        out = out.kronecker(&f);
    }
    out
}

fn dense_tfim(j: &DMatrix<f64>, b: f64) -> DMatrix<f64> {
    let n = j.nrows();
    let dim = 1 << n;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for k in i + 1..n {
            h -= embed(n, i, &sigma_z()) * embed(n, k, &sigma_z()) * j[(i, k)];
        }
        h -= embed(n, i, &sigma_x()) * b;
    }
    h
}

fn reflection(n: usize) -> DMatrix<f64> {
    let dim = 1 << n;
    let mut p = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let mut r = 0;
        for i in 0..n {
            if c >> i & 1 == 1 {
                r |= 1 << (n - 1 - i);
            }
        }
        p[(r, c)] = 1.0;
    }
    p
}

fn global_flip(n: usize) -> DMatrix<f64> {
    let mut x = DMatrix::from_element(1, 1, 1.0);
    for _ in 0..n {
        x = x.kronecker(&sigma_x());
    }
    x
}

fn wobbly_couplings(n: usize, seed: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            0.0
        } else {
            let (a, b) = (i.min(k) as f64, i.max(k) as f64);
            1e3 * (0.3 + (seed + 1.7 * a + 0.61 * b * b).sin()) / (b - a)
        }
    })
}

fn trap_couplings(n: usize, axial: f64, sign: CouplingSign) -> CouplingMatrix {
    solve_trap(&TrapSpec::ytterbium(n, axial)).unwrap().couplings.with_sign(sign)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

#[test]
fn matrix_free_hamiltonian_matches_kronecker_sum() {
    for n in 1..=6 {
        let j = wobbly_couplings(n, n as f64);
        let b = 730.0;
        let cm = CouplingMatrix::from_values(j.clone(), CouplingSign::Ferromagnetic).unwrap();
        let h = build_hamiltonian(&cm, b).unwrap();
        let dense = dense_tfim(&j, b);
        assert!(max_abs(&(h.to_dense() - &dense)) < 1e-9, "n = {n}");

        let psi: Vec<C64> = (0..1 << n).map(|k| C64::new((k as f64 * 0.37).cos(), (k as f64 * 0.11).sin())).collect();
        let mut out = vec![C64::new(0.0, 0.0); psi.len()];
        h.apply(&psi, &mut out);
        for r in 0..psi.len() {
            let want: C64 = (0..psi.len()).map(|c| psi[c] * dense[(r, c)]).sum();
            assert!((out[r] - want).norm() < 1e-9);
        }
    }
}

#[test]
fn sector_spectrum_matches_dense_diagonalization() {
    for sign in [CouplingSign::Ferromagnetic, CouplingSign::Antiferromagnetic] {
        for (n, axial) in [(4, 900e3), (6, 827e3), (8, 797e3)] {
            let cm = trap_couplings(n, axial, sign);
            let b = 1.3 * cm.j0_nn;
            let h = build_hamiltonian(&cm, b).unwrap();
            let spec = diagonalize_with_symmetries(&h).unwrap();
            let mut dense = SymmetricEigen::new(dense_tfim(&cm.values, b)).eigenvalues.as_slice().to_vec();
            dense.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let scale = dense.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            assert_eq!(spec.len(), dense.len());
            for (e, d) in spec.energies().iter().zip(&dense) {
                assert!((e - d).abs() < 1e-10 * scale, "{sign:?} n = {n}: {e} vs {d}");
            }
        }
    }
}

#[test]
fn hamiltonian_commutes_with_both_parities() {
    for n in [3, 5, 8] {
        let cm = trap_couplings(n, 850e3, CouplingSign::Ferromagnetic);
        let h = dense_tfim(&cm.values, 0.8 * cm.j0_nn);
        let scale = max_abs(&h);
        for op in [reflection(n), global_flip(n)] {
            let comm = &h * &op - &op * &h;
            assert!(max_abs(&comm) < 1e-10 * scale, "n = {n}");
        }
    }
}

#[test]
fn eigenvectors_solve_the_dense_problem_and_carry_their_labels() {
    let n = 6;
    let cm = trap_couplings(n, 827e3, CouplingSign::Antiferromagnetic);
    let b = 0.4 * cm.j0_nn;
    let h = build_hamiltonian(&cm, b).unwrap();
    let spec = diagonalize_with_symmetries(&h).unwrap();
    let dense = dense_tfim(&cm.values, b);
    let (p, x) = (reflection(n), global_flip(n));
    let scale = max_abs(&dense);
    for k in 0..spec.len() {
        let v = DVector::from_vec(spec.eigenvector(k));
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!((&dense * &v - &v * spec.energy(k)).norm() < 1e-9 * scale);
        let s = spec.sector(k);
        assert!((&p * &v - &v * s.spatial.value()).norm() < 1e-9);
        assert!((&x * &v - &v * s.spin.value()).norm() < 1e-9);
    }
}

/// Piecewise-constant propagation with the field frozen at each segment
/// midpoint, using the dense eigendecomposition of every segment.
fn exact_piecewise(h: &IsingHamiltonian, schedule: &RampSchedule, segments: usize) -> QuantumState {
    let h_dense = h.to_dense();
    let n = h.n_spins();
    let dt = schedule.t_final / segments as f64;
    let x_sum: DMatrix<f64> = (0..n).map(|i| embed(n, i, &sigma_x())).fold(DMatrix::zeros(1 << n, 1 << n), |a, b| a + b);
    let ising = &h_dense + &x_sum * h.b_field();
    let mut psi: Vec<C64> = initial_state(h.basis()).amplitudes;
    for s in 0..segments {
        let b = schedule.field((s as f64 + 0.5) * dt);
        let eig = SymmetricEigen::new(&ising - &x_sum * b);
        let v = &eig.eigenvectors;
        let dim = psi.len();
        let coeffs: Vec<C64> = (0..dim)
            .map(|m| (0..dim).map(|r| psi[r] * v[(r, m)]).sum::<C64>() * C64::new(0.0, -eig.eigenvalues[m] * dt).exp())
            .collect();
        psi = (0..dim).map(|r| (0..dim).map(|m| coeffs[m] * v[(r, m)]).sum()).collect();
    }
    QuantumState::new(psi, schedule.t_final).unwrap()
}

#[test]
fn crank_nicolson_matches_exact_piecewise_propagation() {
    for sign in [CouplingSign::Ferromagnetic, CouplingSign::Antiferromagnetic] {
        let cm = trap_couplings(3, 900e3, sign);
        let schedule = RampSchedule::from_protocol(cm.j0_nn, 5.0, 0.5, 6.0).unwrap();
        let h = build_hamiltonian(&cm, schedule.final_field()).unwrap();
        let exact = exact_piecewise(&h, &schedule, 1000);
        let traj = evolve(initial_state(h.basis()), &h, &schedule, schedule.tau / 4000.0, &[], |_, _| {}).unwrap();
        let infidelity = 1.0 - traj.final_state.fidelity(&exact);
        assert!(infidelity < 1e-6, "{sign:?}: {infidelity:e}");
    }
}

#[test]
fn slow_ramp_carries_the_initial_ground_state_overlap() {
    let cm = trap_couplings(4, 900e3, CouplingSign::Ferromagnetic);
    let schedule = RampSchedule::from_protocol(cm.j0_nn, 5.0, 20.0, 6.0).unwrap();
    let h = build_hamiltonian(&cm, schedule.final_field()).unwrap();
    let spec = diagonalize_with_symmetries(&h).unwrap();
    let traj = evolve(initial_state(h.basis()), &h, &schedule, schedule.tau / 2000.0, &[], |_, _| {}).unwrap();
    let p = eigenstate_probabilities(&traj.final_state, &spec).unwrap();

    let start = diagonalize_with_symmetries(&h.with_field(schedule.field(0.0))).unwrap();
    let p_start = eigenstate_probabilities(&initial_state(h.basis()), &start).unwrap();
    assert!(p_start[0] > 0.95);
    assert!((p[0] - p_start[0]).abs() < 1e-3, "P0 = {}, initial overlap = {}", p[0], p_start[0]);
}

#[test]
fn zero_length_ramp_returns_the_initial_state() {
    let cm = trap_couplings(4, 900e3, CouplingSign::Antiferromagnetic);
    let schedule = RampSchedule::new(5.0 * cm.j0_nn, 0.5 / cm.j0_nn, 0.0).unwrap();
    let h = build_hamiltonian(&cm, schedule.final_field()).unwrap();
    let psi0 = initial_state(h.basis());
    let traj = evolve(psi0.clone(), &h, &schedule, 1e-6, &[], |_, _| {}).unwrap();
    assert_eq!(traj.steps, 0);
    assert_eq!(traj.final_state.amplitudes, psi0.amplitudes);

    let spec = diagonalize_with_symmetries(&h).unwrap();
    let p = eigenstate_probabilities(&traj.final_state, &spec).unwrap();
    for k in 0..spec.len() {
        let v = spec.eigenvector(k);
        let overlap: f64 = v.iter().zip(&psi0.amplitudes).map(|(a, b)| a * b.re).sum();
        assert!((p[k] - overlap * overlap).abs() < 1e-12);
    }
}
