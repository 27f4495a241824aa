use qcr_thermo::otto::{frequency_efficiency, ghz_to_aj, ladder_at, run_cycle, OttoSpec};
use qcr_thermo::qcr::{effective_temperature, ladder_rates, CouplingSpec, JunctionSpec};
use qcr_thermo::system::SystemSpec;

fn two_level() -> OttoSpec {
    OttoSpec {
        levels: 2,
        ..OttoSpec::default()
    }
}

fn strong() -> CouplingSpec {
    CouplingSpec {
        kappa_eff: 1.0,
        purcell_filter: false,
    }
}

fn rates(omega: f64, v: f64, c: &CouplingSpec) -> (f64, f64) {
    let p = ladder_rates(&[omega], None, &JunctionSpec::default(), c, v).unwrap().pairs[0];
    (p.gamma_down, p.gamma_up)
}

/// Two-level limit cycle in closed form: returns (Q_h, W) per cycle.
fn two_level_oracle(spec: &OttoSpec, c: &CouplingSpec) -> (f64, f64) {
    let relax = |(down, up): (f64, f64)| (up / (down + up), (-(down + up) * spec.t_isochore).exp());
    let (ph, eh) = relax(rates(spec.omega_max, spec.v_hot, c));
    let (pc, ec) = relax(rates(spec.omega_min, spec.v_cold, c));
    // x = excited population entering the hot stroke, a = leaving it
    // a = ph + (x - ph) eh, x = pc + (a - pc) ec
    let x = (pc * (1.0 - ec) + ec * ph * (1.0 - eh)) / (1.0 - ec * eh);
    let a = ph + (x - ph) * eh;
    (spec.omega_max * (a - x), (spec.omega_max - spec.omega_min) * (a - x))
}

fn cold_temperature(omega: f64, v: f64) -> f64 {
    let p = ladder_rates(&[omega], None, &JunctionSpec::default(), &CouplingSpec::default(), v).unwrap().pairs[0];
    effective_temperature(&p).unwrap()
}

#[test]
fn default_engine_reaches_limit_cycle() {
    let r = run_cycle(&OttoSpec::default(), &SystemSpec::default(), &JunctionSpec::default(), &CouplingSpec::default()).unwrap();
    assert!(r.limit_cycle());
    assert!(r.last().work > 0.0);
    assert!(r.t_hot > r.t_cold);
    assert!(r.eta_limit() <= r.eta_carnot + 1e-9);
    assert!((r.eta_limit() - r.eta_frequency).abs() < 1e-6);
    for c in &r.cycles {
        assert!(c.first_law_residual() < 1e-8);
    }
}

#[test]
fn two_level_heat_and_work_match_closed_form() {
    let mut spec = two_level();
    spec.n_cycles = 40;
    for c in [CouplingSpec::default(), strong()] {
        let r = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &c).unwrap();
        let (q_h, w) = two_level_oracle(&spec, &c);
        let last = r.last();
        assert!((last.q_hot - q_h).abs() <= 1e-6 * q_h.abs(), "Q_h {} vs {}", last.q_hot, q_h);
        assert!((last.work - w).abs() <= 1e-6 * w.abs(), "W {} vs {}", last.work, w);
        assert!((last.q_hot + last.q_cold - last.work).abs() <= 1e-8 * q_h.abs());
    }
}

#[test]
fn carnot_bound_on_bias_grid() {
    for v_hot in [0.4, 0.8, 1.2] {
        for v_cold in [0.0, 0.1, 0.2] {
            let spec = OttoSpec {
                v_hot,
                v_cold,
                ..OttoSpec::default()
            };
            let r = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &CouplingSpec::default()).unwrap();
            for c in &r.cycles {
                assert!(c.first_law_residual() < 1e-8);
            }
            if r.last().work > 0.0 {
                assert!(r.eta_limit() <= r.eta_carnot + 1e-9, "({v_hot}, {v_cold}): {} > {}", r.eta_limit(), r.eta_carnot);
            }
        }
    }
}

#[test]
fn complete_thermalization_two_level_limit() {
    let spec = OttoSpec {
        v_hot: 0.6,
        t_isochore: 200.0,
        ..two_level()
    };
    let r = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &strong()).unwrap();
    let eta_f = frequency_efficiency(&spec);
    assert!((r.eta_limit() / eta_f - 1.0).abs() < 0.01);
    assert!(r.last().work > 0.0);
}

#[test]
fn efficiency_approaches_frequency_limit_from_below() {
    let eta_f = frequency_efficiency(&OttoSpec::default());
    let mut prev = f64::NEG_INFINITY;
    for t_isochore in [25.0, 50.0, 100.0, 200.0, 400.0] {
        let spec = OttoSpec {
            t_isochore,
            n_cycles: 60,
            ..two_level()
        };
        let eta = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &strong())
            .unwrap()
            .eta_limit();
        assert!(eta <= eta_f + 1e-9, "{eta} above {eta_f}");
        assert!(eta >= prev - 1e-9);
        prev = eta;
    }
    assert!((prev / eta_f - 1.0).abs() < 0.01);
}

#[test]
fn equal_bath_temperatures_give_no_work() {
    let spec = OttoSpec {
        v_hot: 0.25,
        ..two_level()
    };
    let t_hot = cold_temperature(spec.omega_max, spec.v_hot);
    let (mut lo, mut hi) = (0.0, 0.1);
    assert!((cold_temperature(spec.omega_min, lo) - t_hot) * (cold_temperature(spec.omega_min, hi) - t_hot) < 0.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (cold_temperature(spec.omega_min, mid) < t_hot) == (cold_temperature(spec.omega_min, lo) < t_hot) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let spec = OttoSpec { v_cold: lo, ..spec };
    let r = run_cycle(&spec, &SystemSpec::default(), &JunctionSpec::default(), &strong()).unwrap();
    assert!((r.t_cold / r.t_hot - 1.0).abs() < 1e-6);
    assert!(r.eta_carnot.abs() < 1e-6);
    assert!(r.last().work <= 1e-12, "W = {}", r.last().work);
}

#[test]
fn adiabats_rescale_the_ladder() {
    let system = SystemSpec::default();
    let hot = ladder_at(&system, 6, 4.09).unwrap();
    let cold = ladder_at(&system, 6, 3.0).unwrap();
    for (h, c) in hot.energies.iter().zip(&cold.energies) {
        assert!((c - h * 3.0 / 4.09).abs() < 1e-12);
    }
    assert!((hot.energies[5] - 17.72).abs() < 1e-12);
}

#[test]
fn aj_conversion() {
    assert!((ghz_to_aj(1.0) - 6.62607015e-7).abs() < 1e-20);
}

#[test]
fn invalid_specs_are_rejected() {
    let system = SystemSpec::default();
    let j = JunctionSpec::default();
    let c = CouplingSpec::default();
    let bad = [
        OttoSpec { omega_min: 5.0, ..OttoSpec::default() },
        OttoSpec { v_hot: 0.1, ..OttoSpec::default() },
        OttoSpec { v_cold: 0.3, ..OttoSpec::default() },
        OttoSpec { n_cycles: 0, ..OttoSpec::default() },
        OttoSpec { levels: 1, ..OttoSpec::default() },
        OttoSpec { dt: 0.3, ..OttoSpec::default() },
    ];
    for spec in bad {
        assert!(run_cycle(&spec, &system, &j, &c).is_err(), "{spec:?}");
    }
}
