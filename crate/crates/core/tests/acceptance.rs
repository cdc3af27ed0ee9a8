//! Acceptance run: one PASS/FAIL line per criterion. The process exits 0
//! whatever the verdicts; the lines are the result.

use std::time::{Duration, Instant};

use imagedim::harness::suite::{self, CheckOutcome, SUITE_SEED};
use imagedim::harness::CaseReport;

fn line(n: usize, pass: bool, text: &str) {
    println!("criterion {n:>2}: {} {text}", if pass { "PASS" } else { "FAIL" });
}

fn describe(r: &CaseReport) -> String {
    r.verification
        .iter()
        .map(|v| {
            format!(
                "{}={:.3} (pred {:.3} +- {:.2}{})",
                v.estimator,
                v.estimate,
                v.predicted,
                v.tolerance,
                if v.pass { "" } else { ", out" }
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs registered cases; all must pass, and the wall clock must stay
/// under `limit` when one is given.
fn cases(n: usize, ids: &[&str], limit: Option<Duration>) {
    let mut pass = true;
    let mut parts = Vec::new();
    for id in ids {
        let start = Instant::now();
        match suite::verify_theorem(id, SUITE_SEED, None) {
            Ok(r) => {
                let took = start.elapsed();
                let in_time = limit.is_none_or(|l| took < l);
                pass &= r.passed() && in_time && !r.incomplete;
                let clock = match limit {
                    Some(l) => format!(" runtime {:.1}s (limit {}s)", took.as_secs_f64(), l.as_secs()),
                    None => String::new(),
                };
                parts.push(format!("{id}: {}{clock}", describe(&r)));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{id}: error {e}"));
            }
        }
    }
    line(n, pass, &parts.join("; "));
}

fn check(n: usize, f: impl FnOnce(u64) -> imagedim::Result<CheckOutcome>) {
    match f(SUITE_SEED) {
        Ok(o) => line(n, o.pass, &format!("{}: {}", o.id, o.detail)),
        Err(e) => line(n, false, &format!("error {e}")),
    }
}

fn main() {
    cases(1, &["fbm-saturated"], Some(Duration::from_secs(60)));
    cases(2, &["fbm-unsaturated"], None);
    cases(3, &["cantor-image"], None);
    cases(4, &["cantor-packing-line"], None);
    cases(5, &["cantor-packing-plane"], None);
    cases(6, &["lfsm-line", "lfsm-plane"], None);
    cases(7, &["rosenblatt-line"], Some(Duration::from_secs(600)));
    check(8, suite::profile_identities);
    check(9, suite::lfsm_tail);
    check(10, suite::fourier_equivalence);
    check(11, suite::property_suite);
}
