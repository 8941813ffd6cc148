//! Runs every acceptance criterion, prints one line each and exits nonzero
//! if any fails.

use pasm_core::verify;

fn main() {
    let reports = verify::run_all();
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
