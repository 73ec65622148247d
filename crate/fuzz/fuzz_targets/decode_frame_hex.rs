#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::codec::{decode_frame_hex, encode_frame_hex};

fuzz_target!(|s: &str| {
    if let Ok(f) = decode_frame_hex(s) {
        let hex = encode_frame_hex(&f).expect("decoded frame re-encodes");
        assert_eq!(decode_frame_hex(&hex), Ok(f));
    }
});
