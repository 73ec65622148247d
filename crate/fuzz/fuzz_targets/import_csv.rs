#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::export::{export_csv, import_csv};

fuzz_target!(|data: &[u8]| {
    if let Ok(records) = import_csv(data, 1800) {
        let out = export_csv(records.iter(), 1800).expect("imported records export");
        assert_eq!(import_csv(&out[..], 1800).expect("exported CSV imports"), records);
    }
});
