#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::codec::{decode_frame, encode_frame};

fuzz_target!(|data: &[u8]| {
    if let Ok(f) = decode_frame(data) {
        let bytes = encode_frame(&f).expect("decoded frame re-encodes");
        assert_eq!(decode_frame(&bytes), Ok(f));
    }
});
