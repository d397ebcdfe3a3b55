#![no_main]

use libfuzzer_sys::fuzz_target;
use mphflow::composer::SimulationManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SimulationManifest::parse(text) {
        let emitted = m.emit();
        let again = SimulationManifest::parse(&emitted).expect("emitted manifest parses");
        assert_eq!(again.emit(), emitted);
    }
});
