//! Acceptance suite: one PASS/FAIL line per criterion, with the numbers
//! behind each verdict. Exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use bldc_sim::dtc::{
    lookup_conventional, lookup_modified, FluxCmd, Sector, Table3Variant, TorqueCmd,
};
use bldc_sim::engine::{compare, energy_audit, run, trace_to_csv, vector_response, OperatingPoint};
use bldc_sim::inverter::decode_vector;
use bldc_sim::motor::{step_electrical, step_mechanical, Integrator, MotorParams, MotorState, PhaseQuantities};
use bldc_sim::mras::{mit_update, tracking_error, AdaptiveGainState, SecondOrder};
use bldc_sim::scenario::{Scenario, ScenarioConfig};

use FluxCmd::{Decrease as FD, Increase as FI};
use TorqueCmd::{Decrease as TD, Hold as T0, Increase as TI};

struct Verdict {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            notes: Vec::new(),
        }
    }
}

fn scenario(toml: &str) -> Scenario {
    Scenario::from_config(ScenarioConfig::from_toml(toml, &[]).expect("valid scenario"), None).expect("cycle loads")
}

// Tables as printed: (vector id, gate code) per sector.
type Row = [(u8, &'static str); 6];

const CONVENTIONAL_PRINTED: [(FluxCmd, TorqueCmd, Row); 4] = [
    (FI, TI, [(1, "100001"), (2, "001001"), (3, "011000"), (4, "010010"), (5, "000110"), (6, "100100")]),
    (FI, TD, [(6, "100100"), (1, "100001"), (2, "001001"), (3, "011000"), (4, "010010"), (5, "000110")]),
    (FD, TI, [(0, "010101"), (0, "010101"), (0, "010101"), (0, "010101"), (0, "010101"), (0, "010101")]),
    (FD, TD, [(2, "001001"), (3, "011000"), (4, "010010"), (5, "000110"), (6, "100100"), (1, "100001")]),
];

// Unlabelled continuation rows of the conventional table, read as FI.
const CONVENTIONAL_CONTINUATION: [(TorqueCmd, Row); 2] = [
    (TI, [(2, "001001"), (3, "011000"), (4, "010010"), (5, "000110"), (6, "100100"), (1, "100001")]),
    (TD, [(1, "100001"), (2, "001001"), (3, "011000"), (4, "010010"), (5, "000110"), (6, "100100")]),
];

const MODIFIED_PRINTED: [(TorqueCmd, FluxCmd, Row); 6] = [
    (TI, FI, [(2, "001001"), (3, "011000"), (4, "010010"), (5, "000110"), (6, "100100"), (1, "100001")]),
    (TI, FD, [(3, "011000"), (4, "010010"), (5, "000110"), (6, "100100"), (1, "100001"), (2, "001001")]),
    (T0, FI, [(0, "010101"), (7, "101010"), (0, "010101"), (7, "101010"), (0, "010101"), (7, "101010")]),
    (T0, FD, [(0, "010101"), (7, "101010"), (0, "010101"), (7, "101010"), (0, "010101"), (7, "101010")]),
    (TD, FI, [(6, "100100"), (1, "100001"), (2, "001001"), (3, "011000"), (4, "010010"), (5, "000110")]),
    (TD, FD, [(5, "000110"), (6, "100100"), (1, "100001"), (2, "001001"), (6, "100100"), (4, "010010")]),
];

fn table_exactness() -> Verdict {
    let mut checked = 0;
    let mut wrong = Vec::new();
    let mut check = |label: String, id: u8, expected: (u8, &str)| {
        let bits = decode_vector(id).expect("table ids are 0..=7").to_string();
        checked += 2;
        if id != expected.0 {
            wrong.push(format!("{label}: V{id} != V{}", expected.0));
        }
        if bits != expected.1 {
            wrong.push(format!("{label}: {bits} != {}", expected.1));
        }
    };
    for (f, t, cells) in CONVENTIONAL_PRINTED {
        for (s, cell) in Sector::ALL.into_iter().zip(cells) {
            check(format!("conventional {f}/{t}/{}", s.index()), lookup_conventional(f, t, s), cell);
        }
    }
    // the continuation rows are shadowed at lookup; check the stored rows
    for ((t, cells), row) in CONVENTIONAL_CONTINUATION.into_iter().zip(&bldc_sim::dtc::CONVENTIONAL_TABLE[2..4]) {
        assert_eq!((row.flux, row.torque), (FI, t));
        for (s, cell) in Sector::ALL.into_iter().zip(cells) {
            check(format!("conventional row3-4 FI/{t}/{}", s.index()), row.vectors[s.index() as usize - 1], cell);
        }
    }
    for (t, f, cells) in MODIFIED_PRINTED {
        for (s, cell) in Sector::ALL.into_iter().zip(cells) {
            check(
                format!("modified {t}/{f}/{}", s.index()),
                lookup_modified(t, f, s, Table3Variant::Verbatim),
                cell,
            );
        }
    }
    let mut v = Verdict::new(wrong.is_empty(), format!("{} of {checked} assertions hold", checked - wrong.len()));
    v.notes = wrong;
    v
}

#[derive(Clone, Copy)]
enum Table {
    Conventional,
    Modified(Table3Variant),
}

fn consistency_sweep() -> Verdict {
    let motor = MotorParams::default();
    let (omega, vdc, dt_control, substeps) = (20.0, 200.0, 5e-5, 5);
    let tables = [
        ("conventional", Table::Conventional),
        ("modified", Table::Modified(Table3Variant::Verbatim)),
        ("modified-patched", Table::Modified(Table3Variant::Patched)),
    ];
    let mut notes = Vec::new();
    let mut unexpected = 0;
    let mut anomaly_reported = false;
    let mut cells = 0;
    for (name, table) in tables {
        let mut bad = 0;
        for s in Sector::ALL {
            let op = OperatingPoint::mid_sector(&motor, s, omega, vdc);
            for f in [FI, FD] {
                for t in [TI, TD] {
                    let id = match table {
                        Table::Conventional => lookup_conventional(f, t, s),
                        Table::Modified(variant) => lookup_modified(t, f, s, variant),
                    };
                    let r = vector_response(&motor, &op, id, dt_control, substeps).expect("valid vector");
                    let flux_ok = (r.flux_change() > 0.0) == (f == FI);
                    let torque_ok = (r.torque_change() > 0.0) == (t == TI);
                    cells += 1;
                    if flux_ok && torque_ok {
                        continue;
                    }
                    bad += 1;
                    let known = matches!(table, Table::Modified(Table3Variant::Verbatim))
                        && (t, f, s.index()) == (TD, FD, 5);
                    if known {
                        anomaly_reported = true;
                    } else {
                        unexpected += 1;
                    }
                    notes.push(format!(
                        "{name} {t}/{f}/sector {}: V{id} dT={:+.3} N*m dpsi={:+.2e} Wb{}",
                        s.index(),
                        r.torque_change(),
                        r.flux_change(),
                        if known { " (known printed anomaly)" } else { "" }
                    ));
                }
            }
        }
        notes.push(format!("{name}: {bad} of 24 cells move against the command"));
    }
    let mut v = Verdict::new(
        unexpected == 0,
        format!(
            "{cells} cells swept, {unexpected} unexpected failures, printed anomaly {}",
            if anomaly_reported { "reported" } else { "not triggered" }
        ),
    );
    v.notes = notes;
    v
}

const DECEL_CYCLE: &str = "[cycle]\npoints = [[0, 0], [2, 0], [15, 12], [40, 12], [60, 0]]\n";

fn regeneration_ordering() -> Verdict {
    let conventional = scenario(&format!("name = \"conventional\"\n[dtc]\nmode = \"conventional\"\n{DECEL_CYCLE}"));
    let modified = scenario(&format!("name = \"modified\"\n{DECEL_CYCLE}"));
    let c = compare(&conventional, &modified).expect("runs complete");
    let decel: Vec<f64> = c.b.trace.iter().filter(|r| r.t > 40.0).map(|r| r.i_dc).collect();
    let mean_idc = decel.iter().sum::<f64>() / decel.len() as f64;
    Verdict::new(
        c.delta_soc_final > 0.0 && mean_idc < 0.0,
        format!(
            "soc modified {:.6} vs conventional {:.6} (delta {:+.2e}), mean decel i_dc {mean_idc:.3} A",
            c.b.summary.soc_final, c.a.summary.soc_final, c.delta_soc_final
        ),
    )
}

fn energy_conservation() -> Verdict {
    let base = "[cycle]\npoints = [[0, 0], [0.5, 0], [3, 4], [4, 4], [6, 0]]\n";
    let cases = [
        ("modified/pi", String::new()),
        ("conventional/pi", "[dtc]\nmode = \"conventional\"\n".to_owned()),
        ("modified/mras uphill", "[speed]\ncontroller = \"mras\"\n[road]\nslope = 0.03\n".to_owned()),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    let mut worst = 0.0f64;
    for (label, extra) in &cases {
        let mut residuals = Vec::new();
        let mut floors = Vec::new();
        for dt in [1e-5, 5e-6, 2.5e-6] {
            let sc = scenario(&format!("{base}{extra}[sim]\ndt_electrical = {dt:e}\ndt_control = 5e-5\n"));
            let out = run(&sc).expect("run completes");
            residuals.push(energy_audit(&out, &sc).relative_residual());
            // what double-precision accumulation over this many steps can resolve
            floors.push(sc.duration() / dt * f64::EPSILON);
        }
        worst = worst.max(residuals[0]);
        let within = residuals[0] <= 0.01;
        // fourth-order truncation error drops 16x per halving; allow half that
        // or both already sit under the rounding floor of the summation
        let shrinking = (0..2).all(|k| {
            let (a, b) = (residuals[k], residuals[k + 1]);
            b <= a / 8.0 || (a <= floors[k] && b <= floors[k + 1] && b <= a)
        });
        pass &= within && shrinking;
        notes.push(format!(
            "{label}: relative residual {:.2e} / {:.2e} / {:.2e} at dt 10 / 5 / 2.5 us (rounding floor {:.1e} / {:.1e} / {:.1e})",
            residuals[0], residuals[1], residuals[2], floors[0], floors[1], floors[2]
        ));
    }
    let mut v = Verdict::new(pass, format!("worst residual at 10 us {worst:.2e} (limit 1e-2)"));
    v.notes = notes;
    v
}

fn mras_convergence() -> Verdict {
    // model bm/(s² + b s + a), plant b0/(same), so the ideal gain is bm/b0
    let (bm, b0, a, b) = (400.0, 200.0, 400.0, 40.0);
    let kbar = bm / b0;
    let mut model = SecondOrder::new(bm, a, b);
    let mut plant = SecondOrder::new(b0, a, b);
    let dt = 1e-3;
    let uc = |t: f64| t.sin() + 0.5 * (2.3 * t).sin();
    let mut gain = AdaptiveGainState::new(1.0, 0.5, 0.0, 10.0);
    let steps = 200_000;
    let mut peak_ym = 0.0f64;
    let mut late_err = 0.0f64;
    for k in 0..steps {
        let t = k as f64 * dt;
        let u = gain.kp * uc(t);
        let y = plant.step(u, dt);
        let ym = model.step(uc(t), dt);
        gain = mit_update(&gain, tracking_error(y, ym), ym, dt);
        peak_ym = peak_ym.max(ym.abs());
        if k >= steps - 10_000 {
            late_err = late_err.max(tracking_error(y, ym).abs());
        }
    }
    let kp_err = (gain.kp - kbar).abs() / kbar;
    let off = AdaptiveGainState::new(1.234, 0.0, 0.0, 10.0);
    let frozen = AdaptiveGainState::new(1.234, 0.5, 0.0, 10.0);
    let edge_ok = mit_update(&off, 3.0, 2.0, dt).kp.to_bits() == 1.234f64.to_bits()
        && mit_update(&frozen, 0.0, 2.0, dt).kp.to_bits() == 1.234f64.to_bits();
    Verdict::new(
        kp_err <= 0.02 && late_err < 1e-3 * peak_ym && edge_ok,
        format!(
            "kp {:.5} vs {kbar} ({:.3}%), final |e| {late_err:.2e} vs limit {:.2e}, edge cases {}",
            gain.kp,
            100.0 * kp_err,
            1e-3 * peak_ym,
            if edge_ok { "bit-unchanged" } else { "CHANGED" }
        ),
    )
}

fn adaptability_ordering() -> Verdict {
    let cycle = "[cycle]\npoints = [[0, 0], [2, 0], [12, 6], [20, 6], [26, 12], [34, 12]]\n";
    let gains = "[pi]\nkp = 2.0\nki = 1.0\n";
    let pi = scenario(&format!("name = \"pi\"\n{gains}{cycle}"));
    let mras = scenario(&format!("name = \"mras\"\n[speed]\ncontroller = \"mras\"\n{gains}{cycle}"));
    let c = compare(&pi, &mras).expect("runs complete");
    Verdict::new(
        c.delta_rms_speed_error < 0.0,
        format!(
            "rms speed error mras {:.3} vs pi {:.3} rad/s",
            c.b.summary.rms_speed_error, c.a.summary.rms_speed_error
        ),
    )
}

fn ripple_ordering() -> Verdict {
    let conventional = scenario(&format!("name = \"pi-conventional\"\n[dtc]\nmode = \"conventional\"\n{DECEL_CYCLE}"));
    let adaptive = scenario(&format!("name = \"mras-modified\"\n[speed]\ncontroller = \"mras\"\n{DECEL_CYCLE}"));
    let c = compare(&conventional, &adaptive).expect("runs complete");
    Verdict::new(
        c.b.summary.torque_ripple <= c.a.summary.torque_ripple && c.b.summary.steady_samples > 0,
        format!(
            "steady torque std mras+modified {:.3} vs pi+conventional {:.3} N*m",
            c.b.summary.torque_ripple, c.a.summary.torque_ripple
        ),
    )
}

fn motor_oracles() -> Verdict {
    let p = MotorParams {
        phase_resistance: 0.5,
        self_inductance: 1.2e-3,
        mutual_inductance: 0.2e-3,
        back_emf_constant: 0.1,
        pole_pairs: 2,
        inertia: 0.01,
        viscous_friction: 0.02,
    };
    let dt = 1e-5;
    let tau = p.inductance() / p.phase_resistance;
    let v = PhaseQuantities::new(10.0, -5.0, -5.0);
    let mut s = MotorState::default();
    let mut rl = 0.0f64;
    for k in 1..=1000 {
        s = step_electrical(&p, &s, &v, dt, Integrator::Rk4).expect("finite");
        let exact = 20.0 * (1.0 - (-(k as f64) * dt / tau).exp());
        rl = rl.max((s.currents[0] - exact).abs() / exact);
    }
    let mut s = MotorState {
        omega_mech: 100.0,
        ..Default::default()
    };
    let mut decay = 0.0f64;
    for k in 1..=100_000 {
        s = step_mechanical(&p, &s, 0.0, 0.0, dt).expect("finite");
        let exact = 100.0 * (-p.viscous_friction * k as f64 * dt / p.inertia).exp();
        decay = decay.max((s.omega_mech - exact).abs() / exact);
    }
    // underdamped model: s² + 2s + 10, unit dc gain
    let mut m = SecondOrder::new(10.0, 10.0, 2.0);
    let wd = 3.0f64;
    let mut model = 0.0f64;
    for k in 1..=10_000 {
        let y = m.step(1.0, 1e-3);
        let t = k as f64 * 1e-3;
        let exact = 1.0 - (-t).exp() * ((wd * t).cos() + (wd * t).sin() / wd);
        if t >= 0.1 {
            model = model.max((y - exact).abs() / exact.abs());
        }
    }
    Verdict::new(
        rl <= 1e-3 && decay <= 1e-3 && model <= 1e-3,
        format!("max relative error: RL step {rl:.1e}, free decay {decay:.1e}, reference model {model:.1e}"),
    )
}

fn determinism() -> Verdict {
    let sc = scenario(&format!("[speed]\ncontroller = \"mras\"\n{DECEL_CYCLE}[sim]\nduration = 20.0\n"));
    let a = trace_to_csv(&run(&sc).expect("run completes").trace);
    let b = trace_to_csv(&run(&sc).expect("run completes").trace);
    Verdict::new(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        ("switching-table exactness", table_exactness),
        ("table-consistency sweep", consistency_sweep),
        ("regeneration ordering", regeneration_ordering),
        ("energy conservation", energy_conservation),
        ("mras convergence", mras_convergence),
        ("adaptability ordering", adaptability_ordering),
        ("torque-ripple ordering", ripple_ordering),
        ("motor-model oracles", motor_oracles),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let verdict = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {verdict}: {name}: {} [{:.1} s]",
            n + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
        for note in &v.notes {
            println!("    {note}");
        }
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
