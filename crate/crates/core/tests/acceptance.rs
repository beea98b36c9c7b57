//! Acceptance checks, one line per criterion.

mod common;

use std::process::ExitCode;

use cohflux::battery::{new_battery, uniformity_epsilon, AlphaProfile, Battery};
use cohflux::coupling::{condition_residuals, Coupling};
use cohflux::majorisation::{apply_transport, birkhoff, hlp_transport, is_majorised};
use cohflux::protocol::{
    build_joint_states, build_transition, forward_protocol, full_label_oracle, make_window,
    overlap_to_ideal, reverse_protocol, ReverseCoupling,
};
use cohflux::theorems::{crooks, crooks_points, entropy_vs_majorisation, jarzynski, second_law, tail_bound, third_law};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn round_trip_reverse(c: &Coupling, n: usize) -> ReverseCoupling {
    let w = make_window(n, c).unwrap();
    let g = build_transition(c, 2, &w).unwrap();
    let (lo, hi) = w.inner().unwrap();
    reverse_protocol(&g, &Battery::centred_uniform(2, n, hi - lo + 1).unwrap()).unwrap()
}

fn random_uniform_target_mixtures(seed: u64, count: usize) -> Vec<Coupling> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let d = 4;
            let p = st(&random_dyadic(&mut rng, d));
            let q = st(&random_dyadic_uniform(&mut rng, d));
            let base = cohflux::coupling::canonical_coupling(&p, &q, 2, cohflux::coupling::GridMode::ExactGrid).unwrap();
            random_mixture(&mut rng, &base)
        })
        .collect()
}

fn conditions() -> Outcome {
    let cases = [
        ("identity", identity2()),
        ("dyadic4", dyadic4()),
        ("collapse", collapse()),
        ("crooks", crooks_fixture()),
        ("dyadic3", canon(&[0.5, 0.25, 0.25], &[0.5, 0.5, 0.0])),
    ];
    let mut worst: f64 = 0.0;
    for (name, c) in &cases {
        let r = condition_residuals(c).max();
        ensure(r < 1e-12, format!("{name}: residual {r:e}"))?;
        worst = worst.max(r);
    }
    Ok(format!("{} canonical fixtures, max residual {worst:.1e}", cases.len()))
}

fn round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, c) in [("identity", identity2()), ("dyadic4", dyadic4()), ("breathing", breathing())] {
        for n in [7usize, 11, 31] {
            let w = make_window(n, &c).map_err(|e| e.to_string())?;
            let g = build_transition(&c, 2, &w).map_err(|e| e.to_string())?;
            let b = Battery::centred_uniform(2, n, w.width()).unwrap();
            let diff = forward_protocol(&g, &b).map_err(|e| e.to_string())?.max_abs_diff(&c);
            ensure(diff < 1e-12, format!("{name} n={n}: {diff:e}"))?;
            worst = worst.max(diff);
        }
    }
    Ok(format!("max entry-wise deviation {worst:.1e}"))
}

fn second_law_check() -> Outcome {
    let r = second_law(&dyadic4());
    ensure((r.lhs + 0.25 * LN2).abs() < 1e-12, format!("dyadic4 <w> = {}", r.lhs))?;
    ensure((r.lhs - r.rhs).abs() < 1e-12, format!("dyadic4 not saturated: gap {}", r.details["gap"]))?;
    let r = second_law(&breathing());
    let gap = r.details["gap"];
    ensure((gap - LN2 / 3.0).abs() < 1e-12 && r.holds, format!("breathing gap {gap}"))?;
    Ok(format!("saturated at {:.6}, strict gap {gap:.6}", -0.25 * LN2))
}

fn jarzynski_check() -> Outcome {
    for (c, expected) in [(dyadic4(), 1.0), (collapse(), 2.0), (crooks_fixture(), 0.75)] {
        let r = jarzynski(&c).map_err(|e| e.to_string())?;
        ensure((r.lhs - expected).abs() < 1e-12, format!("<e^w> = {} expected {expected}", r.lhs))?;
        ensure(r.holds, format!("rhs {} differs", r.rhs))?;
    }
    let mut pool: Vec<Coupling> = named_fixtures().into_iter().map(|(_, c)| c).collect();
    pool.extend(random_uniform_target_mixtures(41, 100));
    let mut checked = 0;
    for c in &pool {
        let r = jarzynski(c).map_err(|e| e.to_string())?;
        ensure(r.residual < 1e-9, format!("jarzynski residual {:e} on mixture", r.residual))?;
        for t in [0.1, 0.5, 1.0, 2.0] {
            let r = tail_bound(c, t).map_err(|e| e.to_string())?;
            ensure(r.holds, format!("tail {} > {} at r={t}", r.lhs, r.rhs))?;
            checked += 1;
        }
    }
    Ok(format!("1, 2, 3/4 reproduced; {checked} tail checks on {} couplings", pool.len()))
}

fn crooks_check() -> Outcome {
    let c = crooks_fixture();
    let rev = round_trip_reverse(&c, 9);
    let r = crooks(&c, &rev).map_err(|e| e.to_string())?;
    ensure(r.residual < 1e-10, format!("residual {:e}", r.residual))?;
    let points = crooks_points(&c, &rev).map_err(|e| e.to_string())?;
    let pt = points.iter().find(|p| p.f == -1).ok_or("no mass at w = -ln 2")?;
    let ratio = pt.forward / pt.reverse;
    ensure((ratio - 1.5).abs() < 1e-10, format!("ratio {ratio}"))?;
    Ok(format!("residual {:.1e}, P(-ln2)/Prev(ln2) = {ratio:.12}", r.residual))
}

fn third_law_check() -> Outcome {
    let mut pool: Vec<Coupling> = named_fixtures().into_iter().map(|(_, c)| c).collect();
    pool.extend(random_uniform_target_mixtures(43, 100));
    for c in &pool {
        let r = third_law(c).map_err(|e| e.to_string())?;
        ensure(r.holds, format!("{} < {}", r.lhs, r.rhs))?;
    }
    // p = (1/2, 1/4, ..., 2^-k, 2^-k) padded to 12, q uniform on four levels
    let d = 12;
    let mut q = vec![0.0; d];
    q[..4].fill(0.25);
    let mut reach = Vec::new();
    for k in 3..=11 {
        let mut p = vec![0.0; d];
        for (i, v) in p.iter_mut().enumerate().take(k) {
            *v = 0.5f64.powi(i as i32 + 1);
        }
        p[k] = 0.5f64.powi(k as i32);
        let c = canon(&p, &q);
        ensure(third_law(&c).map_err(|e| e.to_string())?.holds, format!("k={k} fails"))?;
        reach.push(c.f_max());
    }
    ensure(reach.windows(2).all(|w| w[1] == w[0] + 1), format!("max|f| sequence {reach:?}"))?;
    Ok(format!("{} couplings hold; max|f| per halving {reach:?}", pool.len()))
}

fn overlap_check() -> Outcome {
    let mut points = 0;
    for (name, c) in [("dyadic4", dyadic4()), ("breathing", breathing()), ("crooks", crooks_fixture())] {
        let mut last = f64::INFINITY;
        for n in [7usize, 11, 19, 31] {
            let w = make_window(n, &c).map_err(|e| e.to_string())?;
            let (psi, _) = build_joint_states(&c, 2, &w).map_err(|e| e.to_string())?;
            let o = overlap_to_ideal(&psi, c.p(), &w);
            ensure(o.overlap >= o.bound - 1e-12, format!("{name} n={n}: {} < {}", o.overlap, o.bound))?;
            if w.f_max == 1 && w.big_n == 9 {
                ensure((o.bound - 0.833333).abs() < 1e-6, format!("bound {}", o.bound))?;
            }
            let gap = 1.0 - o.overlap;
            ensure(gap < last && gap <= 1.0 - o.bound + 1e-12, format!("{name} n={n}: 1 - overlap = {gap}"))?;
            last = gap;
            points += 1;
        }
    }
    Ok(format!("{points} sweep points above bound, deficit shrinking"))
}

fn non_ideal_check() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    let mut rows = 0;
    for (name, c) in [("breathing", breathing()), ("dyadic4", dyadic4())] {
        for n in (7..=31).step_by(4) {
            let w = make_window(n, &c).map_err(|e| e.to_string())?;
            let g = build_transition(&c, 2, &w).map_err(|e| e.to_string())?;
            let centre = (w.lo + w.hi) as f64 / 2.0;
            let profile = AlphaProfile::TruncatedGaussian {
                center: centre,
                sigma: w.big_n as f64 / 4.0,
                lo: w.lo,
                hi: w.hi,
            };
            let b = new_battery(2, n, profile).map_err(|e| e.to_string())?;
            let eps = uniformity_epsilon(&b, w.f_max);
            let out = forward_protocol(&g, &b).map_err(|e| e.to_string())?;
            let r = condition_residuals(&out);
            let fm = w.f_max as f64;
            let r2_bound = (8.0 * eps).sqrt() * fm * (fm + 1.0);
            let r3_bound = eps / 2.0;
            ensure(r.r2 <= r2_bound + 1e-12, format!("{name} n={n}: r2 {:e} > {r2_bound:e}", r.r2))?;
            ensure(r.r3 <= r3_bound + 1e-12, format!("{name} n={n}: r3 {:e} > {r3_bound:e}", r.r3))?;
            worst_ratio = worst_ratio.max(r.r2.max(r.r3));
            rows += 1;
        }
    }
    Ok(format!("{rows} gaussian points within bounds, largest residual {worst_ratio:.1e}"))
}

fn oracle_check() -> Outcome {
    let cases = [
        ("identity", identity2(), 4),
        ("collapse", collapse(), 6),
        ("breathing", breathing(), 6),
        ("dyadic3", canon(&[0.5, 0.25, 0.25], &[0.5, 0.5, 0.0]), 8),
    ];
    let mut worst: f64 = 0.0;
    for (name, c, n) in &cases {
        let r = full_label_oracle(c, 2, *n).map_err(|e| format!("{name}: {e}"))?;
        ensure(r.max_discrepancy() < 1e-12, format!("{name}: {r:?}"))?;
        ensure(r.reverse_diff.is_some() || *name == "identity", format!("{name}: reverse not compared"))?;
        worst = worst.max(r.max_discrepancy());
    }
    Ok(format!("{} fixtures, max discrepancy {worst:.1e}", cases.len()))
}

fn majorisation_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut most_terms = 0;
    for k in 0..200 {
        let d = 1 + k % 8;
        let b = random_bistochastic(&mut rng, d);
        let m = birkhoff(&b, 1e-14).map_err(|e| e.to_string())?;
        let err = m.to_matrix().max_abs_diff(&b);
        ensure(err < 1e-12, format!("d={d}: reconstruction {err:e}"))?;
        ensure(m.len() <= (d - 1) * (d - 1) + 1, format!("d={d}: {} terms", m.len()))?;
        most_terms = most_terms.max(m.len());
    }
    let mut majorised = 0;
    for k in 0..200 {
        let d = 2 + k % 6;
        let q = random_state(&mut rng, d);
        let p = if k % 2 == 0 {
            apply_transport(&random_bistochastic(&mut rng, d), &q).map_err(|e| e.to_string())?
        } else {
            random_state(&mut rng, d)
        };
        let m = is_majorised(&p, &q, 1e-12).map_err(|e| e.to_string())?;
        ensure(m == hlp_transport(&p, &q).is_ok(), format!("pair {k}: transport disagrees"))?;
        majorised += m as usize;
    }
    let c = entropy_vs_majorisation(&st(&[0.5, 0.49, 0.01]), &st(&[0.8, 0.1, 0.1])).map_err(|e| e.to_string())?;
    ensure(c.flagged && c.entropy_ordered && !c.majorised, format!("{c:?}"))?;
    Ok(format!("max {most_terms} Birkhoff terms; {majorised}/200 pairs majorised; counterexample flagged"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("conditions", conditions),
        ("round trip", round_trip),
        ("second law", second_law_check),
        ("jarzynski", jarzynski_check),
        ("crooks", crooks_check),
        ("third law", third_law_check),
        ("overlap", overlap_check),
        ("non-ideal battery", non_ideal_check),
        ("oracle", oracle_check),
        ("majorisation", majorisation_check),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(msg) => println!("[{:>2}] PASS {name}: {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("[{:>2}] FAIL {name}: {msg}", k + 1);
            }
        }
    }
    println!("acceptance: {}/{} passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
