#![no_main]

use libfuzzer_sys::fuzz_target;
use mphflow::bodies::{Kinematics, LagrangianBody};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for dims in [2, 3] {
        if let Ok(b) = LagrangianBody::parse(text, dims, Kinematics::default()) {
            let _ = b.signed_distance([0.5, 0.5, 0.5], 0.1);
        }
    }
});
