use linkdrift_bench::{default_cell, drifting_pair, long_haul_request, warm_simulation};
use linkdrift_core::eon::select_lightpath;

#[test]
fn fixtures_are_usable() {
    let sim = warm_simulation(50);
    assert!(sim.active_count() > 0);
    let (demand, paths) = long_haul_request(&sim);
    assert_eq!(paths.len(), 10);
    assert!(select_lightpath(sim.topology(), sim.grid(), &demand, &paths).is_some());
    assert_eq!(default_cell(30).hidden, 30);
    let (p, a) = drifting_pair(300);
    assert_eq!(p.len(), a.len());
}
