// The expected-speedup model as a function of tokens per call, acceptance
// rate and relative draft cost.

use swift_core::bench::expected_speedup;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>6} {:>6} {:>6} {:>8}", "M", "alpha", "c", "speedup");
    for &(m, alpha, c) in &[(4.34, 0.99, 0.55), (2.95, 0.92, 0.55), (6.17, 0.99, 0.5), (1.0, 1.0, 0.5)] {
        println!("{m:>6.2} {alpha:>6.2} {c:>6.2} {:>8.3}", expected_speedup(m, alpha, c)?);
    }
    // One token per call means no drafting benefit.
    assert_eq!(expected_speedup(1.0, 0.9, 0.4)?, 1.0);
    assert!(expected_speedup(3.0, 0.9, 0.0).is_err());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
