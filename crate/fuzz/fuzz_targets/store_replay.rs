#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::store::Store;

fuzz_target!(|data: &[u8]| {
    let mut store = Store::in_memory();
    let _ = store.replay(data);
});
