//! Finite-difference audit of every layer kind, the same check
//! `structconv gradcheck` runs.

use structconv::fdcheck;

fn main() {
    let checks = fdcheck::run_all();
    println!("central differences, h = {:.0e}, tolerance {:.0e}\n", fdcheck::FD_STEP, fdcheck::FD_TOLERANCE);
    for c in &checks {
        println!(
            "{:<16} max relative error {:.3e}  {}",
            c.name,
            c.max_rel_err,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    if !checks.iter().all(|c| c.passed()) {
        std::process::exit(1);
    }
}
