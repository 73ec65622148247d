#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::scenario::Scenario;

fuzz_target!(|s: &str| {
    if let Ok(sc) = Scenario::from_json(s) {
        assert_eq!(Scenario::from_json(&sc.to_json()).as_ref().ok(), Some(&sc));
    }
});
