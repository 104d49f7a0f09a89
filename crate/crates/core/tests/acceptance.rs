use kobalab::acceptance::{run_all, AcceptanceOptions};

#[test]
fn acceptance_suite() {
    let report = run_all(&AcceptanceOptions::default());
    for c in &report.criteria {
        println!("criterion {:>2} {:<42} {}  {}", c.id, c.name, if c.pass { "PASS" } else { "FAIL" }, c.summary);
    }
    let failed: Vec<usize> = report.criteria.iter().filter(|c| !c.pass).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
