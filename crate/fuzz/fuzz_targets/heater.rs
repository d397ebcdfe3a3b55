#![no_main]

use libfuzzer_sys::fuzz_target;
use mphflow::grid::{BoundaryType, DomainSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let domain = DomainSpec::unit(2, [1, 1, 1], [16, 16, 1]).with_boundary(1, BoundaryType::NoslipIns, BoundaryType::OutflowIns);
    let _ = mphflow::sourceterms::parse_heaters(text, &domain, 1.0);
});
