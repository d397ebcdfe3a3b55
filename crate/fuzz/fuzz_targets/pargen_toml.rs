#![no_main]

use libfuzzer_sys::fuzz_target;
use mphflow::composer::SimulationManifest;

const SCHEMA: &str = include_str!("../../crates/core/tests/fixtures/golden/flowboiling.manifest");

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let m = SimulationManifest::parse(SCHEMA).expect("fixture manifest");
    if let Ok(par) = mphflow::params::generate_parfile(text, &m.parameters) {
        mphflow::params::parse_parfile(&par).expect("generated parfile parses");
    }
});
