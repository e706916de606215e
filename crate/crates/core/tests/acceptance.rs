//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::time::Instant;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;
use speed_sim::dataflow::*;
use speed_sim::isa::{
    decode, encode, CfgReg, DataflowMode, Instruction, Precision, MAX_COUNT, MAX_STEPS, OPCODE_CUSTOM0,
};
use speed_sim::report::{peak_ops_per_cycle, theoretical_peak, REFERENCE_CF_RATIO, REFERENCE_FF_RATIO};
use speed_sim::vcore::MachineConfig;
use speed_sim::workloads::{conv2d_ref, gen_tensor, gen_weights, model_layers};

const ORACLE_CASES: usize = 200;
/// Bounds on OP/cycle(4-bit) / OP/cycle(16-bit) for the macro layer.
const PRECISION_RATIO_RANGE: (f64, f64) = (8.0, 16.0);

/// What every executed schedule contributes to criteria 6 and 7.
#[derive(Default)]
struct Ledger {
    schedules: usize,
    cycle_mismatches: Vec<String>,
    reuse_checked: usize,
    reuse_failures: Vec<String>,
    vsalds: u64,
    broadcast_violations: u64,
}

impl Ledger {
    fn merge(&mut self, o: Ledger) {
        self.schedules += o.schedules;
        self.cycle_mismatches.extend(o.cycle_mismatches);
        self.reuse_checked += o.reuse_checked;
        self.reuse_failures.extend(o.reuse_failures);
        self.vsalds += o.vsalds;
        self.broadcast_violations += o.broadcast_violations;
    }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {n}: {title} ({})", o.detail);
}

/// Plans, executes and records one schedule; returns whether the output
/// matched the reference exactly.
fn run_case(
    layer: &LayerSpec,
    cfg: &MachineConfig,
    mode: DataflowMode,
    seed: u64,
    oracle: bool,
    trace: bool,
) -> (bool, u64, Ledger) {
    let mut led = Ledger::default();
    let s = plan(layer, cfg, mode).unwrap_or_else(|e| panic!("{layer}: {e}"));
    let input = gen_tensor(seed, (layer.cin, layer.h, layer.w), layer.precision);
    let weights = gen_weights(
        seed.wrapping_mul(31).wrapping_add(7),
        layer.cout,
        layer.cin,
        layer.k,
        layer.precision,
    );
    let shift = default_shift(layer);
    let run = execute(&s, &input, &weights, shift, trace).unwrap_or_else(|e| panic!("{layer}: {e}"));
    led.schedules = 1;
    if run.cycles != s.est_cycles {
        led.cycle_mismatches
            .push(format!("{layer} {mode:?}: est {} sim {}", s.est_cycles, run.cycles));
    }
    if mode == DataflowMode::FF && layer.k >= 3 && layer.stride == 1 {
        led.reuse_checked = 1;
        if s.input_load_bytes() >= s.no_reuse_input_bytes() {
            led.reuse_failures.push(format!(
                "{layer}: {} >= {}",
                s.input_load_bytes(),
                s.no_reuse_input_bytes()
            ));
        }
    }
    for ev in &run.trace {
        if let Some(same) = ev.broadcast_identical {
            led.vsalds += 1;
            if !same {
                led.broadcast_violations += 1;
            }
        }
    }
    let ok = !oracle || {
        let expect = conv2d_ref(&input, &weights, layer, shift).unwrap();
        run.output.first_mismatch(&expect).is_none()
    };
    (ok, run.cycles, led)
}

fn random_layer(rng: &mut Xoshiro256StarStar, i: usize) -> LayerSpec {
    let mut pick = |n: u64| (rng.next_u64() % n) as usize;
    let p = Precision::ALL[pick(3)];
    let k = [1, 3, 5, 7][pick(4)];
    let stride = 1 + pick(2);
    let pad = if pick(2) == 0 { 0 } else { k / 2 };
    let cin = 1 + pick(64);
    let cout = 1 + pick(64);
    // at least two output columns and rows, so windows can overlap
    let lo = (k + stride).saturating_sub(2 * pad).max(1);
    let h = lo + pick((33 - lo) as u64);
    let w = lo + pick((33 - lo) as u64);
    LayerSpec::new(format!("rand{i}"), cin, cout, h, w, k, stride, pad, p)
}

fn criterion1(cfg: &MachineConfig, led: &mut Ledger) -> Outcome {
    let mut rng = Xoshiro256StarStar::seed_from_u64(0x5EED);
    let layers: Vec<LayerSpec> = (0..ORACLE_CASES).map(|i| random_layer(&mut rng, i)).collect();
    let results: Vec<(String, bool, Ledger)> = layers
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, l)| {
            [DataflowMode::FF, DataflowMode::CF].into_iter().map(move |m| {
                let (ok, _, led) = run_case(l, cfg, m, i as u64, true, true);
                (format!("{l} {m:?}"), ok, led)
            })
        })
        .collect();
    let mut failures = Vec::new();
    let n = results.len();
    for (name, ok, l) in results {
        if !ok {
            failures.push(name);
        }
        led.merge(l);
    }
    let mut cover = [[false; 4]; 3];
    for l in &layers {
        let pi = Precision::ALL.iter().position(|&p| p == l.precision).unwrap();
        cover[pi][[1, 3, 5, 7].iter().position(|&k| k == l.k).unwrap()] = true;
    }
    let covered = cover.iter().flatten().all(|&c| c);
    Outcome {
        pass: failures.is_empty() && covered && layers.len() >= 200,
        detail: format!(
            "{} layers x FF/CF = {n} runs, {} mismatches, all precision x kernel pairs covered: {covered}{}",
            layers.len(),
            failures.len(),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    }
}

fn criterion2(cfg: &MachineConfig, led: &mut Ledger) -> Outcome {
    let m = model_layers("googlenet", Precision::P16).unwrap();
    let sels: Vec<Selection> = m.layers.iter().map(|l| select_strategy(l, cfg).unwrap()).collect();
    let (mut ff, mut cf, mut mixed) = (0u64, 0u64, 0u64);
    let mut min_ok = true;
    let mut wrong_choice = Vec::new();
    for (l, s) in m.layers.iter().zip(&sels) {
        let (f, c) = (s.ff_cycles.unwrap(), s.cf_cycles.unwrap());
        ff += f;
        cf += c;
        mixed += s.cycles();
        min_ok &= s.cycles() == f.min(c);
        let want = if l.k == 1 { DataflowMode::CF } else { DataflowMode::FF };
        if s.chosen != want {
            wrong_choice.push(l.name.clone());
        }
    }
    // every schedule of the model is also executed, for criterion 6
    let sims: Vec<(u64, u64, Ledger)> = m
        .layers
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, l)| {
            [DataflowMode::FF, DataflowMode::CF].into_iter().map(move |mode| {
                let (_, cyc, led) = run_case(l, cfg, mode, i as u64, false, false);
                (i as u64, cyc, led)
            })
        })
        .collect();
    for (_, _, l) in sims {
        led.merge(l);
    }
    let (rf, rc) = (ff as f64 / mixed as f64, cf as f64 / mixed as f64);
    Outcome {
        pass: min_ok && mixed < ff && mixed < cf && wrong_choice.is_empty(),
        detail: format!(
            "{} layers, per-layer min: {min_ok}, cycles FF {ff} CF {cf} mixed {mixed}; \
             FF/mixed {rf:.2} (reference {REFERENCE_FF_RATIO}), CF/mixed {rc:.2} (reference {REFERENCE_CF_RATIO}); \
             unexpected strategy: {wrong_choice:?}",
            m.layers.len()
        ),
    }
}

fn criterion3(cfg: &MachineConfig, led: &mut Ledger) -> Outcome {
    let mut opc = Vec::new();
    let mut within_peak = true;
    let mut parts = Vec::new();
    for p in Precision::ALL {
        let l = LayerSpec::new("macro", 256, 256, 14, 14, 3, 1, 1, p);
        let sel = select_strategy(&l, cfg).unwrap();
        let (_, cycles, lg) = run_case(&l, cfg, sel.chosen, 3, false, false);
        led.merge(lg);
        let o = 2.0 * l.macs() as f64 / cycles as f64;
        let gops = o * cfg.freq_mhz / 1000.0;
        within_peak &= gops <= theoretical_peak(cfg, p);
        parts.push(format!("{}b {:?} {o:.2} OP/cycle {gops:.1} GOPS", p.bits(), sel.chosen));
        opc.push(o);
    }
    // the ceiling must also hold across machine shapes
    for lanes in [2, 4, 8] {
        for tile in [2, 4, 8] {
            let c = MachineConfig {
                lanes,
                tile_r: tile,
                tile_c: tile,
                vlen_bits: cfg.reg_bits() * lanes,
                ..cfg.clone()
            };
            for p in Precision::ALL {
                let l = LayerSpec::new("macro", 256, 256, 14, 14, 3, 1, 1, p);
                if let Ok(sel) = select_strategy(&l, &c) {
                    let o = 2.0 * l.macs() as f64 / sel.cycles() as f64;
                    within_peak &= o <= peak_ops_per_cycle(&c, p) as f64;
                }
            }
        }
    }
    let ratio = opc[0] / opc[2];
    let (lo, hi) = PRECISION_RATIO_RANGE;
    Outcome {
        pass: opc[0] > opc[1] && opc[1] > opc[2] && (lo..=hi).contains(&ratio) && within_peak,
        detail: format!(
            "{}; 4b/16b ratio {ratio:.2} in [{lo}, {hi}]; GOPS within ceiling everywhere: {within_peak}",
            parts.join(", ")
        ),
    }
}

fn criterion4(cfg: &MachineConfig, led: &mut Ledger) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for p in Precision::ALL {
        let util: Vec<f64> = [1, 3, 5]
            .iter()
            .map(|&k| {
                let l = LayerSpec::new(format!("k{k}"), 64, 64, 28, 28, k, 1, k / 2, p);
                let (_, cycles, lg) = run_case(&l, cfg, DataflowMode::FF, k as u64, false, false);
                led.merge(lg);
                2.0 * l.macs() as f64 / cycles as f64 / peak_ops_per_cycle(cfg, p) as f64
            })
            .collect();
        pass &= util[2] > util[1] && util[1] > util[0];
        parts.push(format!(
            "{}b k1 {:.3} k3 {:.3} k5 {:.3}",
            p.bits(),
            util[0],
            util[1],
            util[2]
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion5() -> Outcome {
    let mut forms = Vec::new();
    for precision in Precision::ALL {
        for dataflow in [DataflowMode::FF, DataflowMode::CF] {
            forms.push(Instruction::VsaCfg { precision, dataflow });
        }
    }
    for reg in CfgReg::ALL {
        for value in 0..=0xFFF {
            forms.push(Instruction::VSetCfg { reg, value });
        }
    }
    let mut checked = forms.len() as u64;
    let mut bad = 0u64;
    for i in &forms {
        if decode(encode(i).unwrap()).ok() != Some(*i) {
            bad += 1;
        }
    }
    for a in 0..32u8 {
        for b in 0..32u8 {
            for count in 0..=MAX_COUNT {
                for i in [
                    Instruction::VsaLd { vd: a, base: b, count },
                    Instruction::Vle { vd: a, base: b, count },
                    Instruction::Vse { vs: a, base: b, count },
                ] {
                    checked += 1;
                    if decode(encode(&i).unwrap()).ok() != Some(i) {
                        bad += 1;
                    }
                }
            }
            for acc in 0..32u8 {
                for steps in 1..=MAX_STEPS {
                    let i = Instruction::VsaM {
                        vs1: a,
                        vs2: b,
                        acc,
                        steps,
                    };
                    checked += 1;
                    if decode(encode(&i).unwrap()).ok() != Some(i) {
                        bad += 1;
                    }
                }
            }
        }
    }
    // every word in the custom-0 space: accepted words re-encode to
    // themselves, and nothing with a reserved bit set decodes
    let mut accepted = 0u64;
    let mut reserved_accepted = 0u64;
    for hi in 0..(1u32 << 25) {
        let w = (hi << 7) | OPCODE_CUSTOM0;
        if let Ok(i) = decode(w) {
            accepted += 1;
            if encode(&i).ok() != Some(w) {
                bad += 1;
            }
            let reserved = match (w >> 12) & 7 {
                0b000 => speed_sim::isa::VSACFG_RESERVED_MASK,
                0b011 => speed_sim::isa::VSETCFG_RESERVED_MASK,
                _ => 0,
            };
            if w & reserved != 0 {
                reserved_accepted += 1;
            }
        }
    }
    Outcome {
        pass: bad == 0 && reserved_accepted == 0,
        detail: format!(
            "{checked} field combinations round-tripped, {} custom-0 words decoded ({accepted} accepted), \
             {bad} failures, {reserved_accepted} reserved-bit words accepted",
            1u64 << 25
        ),
    }
}

fn main() {
    let cfg = MachineConfig::default();
    let mut led = Ledger::default();
    let mut all = true;
    let step = |n: usize, title: &str, f: &mut dyn FnMut(&mut Ledger) -> Outcome, led: &mut Ledger| {
        let t = Instant::now();
        let mut o = f(led);
        o.detail.push_str(&format!("; {:.1}s", t.elapsed().as_secs_f64()));
        report(n, title, &o);
        o.pass
    };
    all &= step(1, "oracle equivalence", &mut |l| criterion1(&cfg, l), &mut led);
    all &= step(
        2,
        "mixed strategy on GoogLeNet 16-bit",
        &mut |l| criterion2(&cfg, l),
        &mut led,
    );
    all &= step(
        3,
        "precision scaling on the macro layer",
        &mut |l| criterion3(&cfg, l),
        &mut led,
    );
    all &= step(
        4,
        "FF utilization rises with kernel size",
        &mut |l| criterion4(&cfg, l),
        &mut led,
    );
    all &= step(
        5,
        "ISA round trip and reserved-bit rejection",
        &mut |_| criterion5(),
        &mut led,
    );

    let c6 = Outcome {
        pass: led.cycle_mismatches.is_empty() && led.reuse_failures.is_empty() && led.reuse_checked > 0,
        detail: format!(
            "{} schedules, {} cycle mismatches{}; {} FF k>=3 stride-1 schedules, {} without input savings{}",
            led.schedules,
            led.cycle_mismatches.len(),
            led.cycle_mismatches
                .first()
                .map(|m| format!(" (first: {m})"))
                .unwrap_or_default(),
            led.reuse_checked,
            led.reuse_failures.len(),
            led.reuse_failures
                .first()
                .map(|m| format!(" (first: {m})"))
                .unwrap_or_default(),
        ),
    };
    report(
        6,
        "planner cycles equal simulated cycles; FF reuse saves input traffic",
        &c6,
    );
    all &= c6.pass;

    let c7 = Outcome {
        pass: led.broadcast_violations == 0 && led.vsalds > 0,
        detail: format!(
            "{} VSALDs traced, {} lane mismatches",
            led.vsalds, led.broadcast_violations
        ),
    };
    report(7, "broadcast loads leave all lanes identical", &c7);
    all &= c7.pass;

    if !all {
        std::process::exit(1);
    }
}
