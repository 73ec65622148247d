#![no_main]

use libfuzzer_sys::fuzz_target;
use urbansense_core::envelope::UplinkEnvelope;
use urbansense_core::geometry::SquareDefinition;
use urbansense_core::model::GeoPosition;
use urbansense_core::store::{IngestResult, Store};

fuzz_target!(|data: &[u8]| {
    let Ok(env) = serde_json::from_slice::<UplinkEnvelope>(data) else {
        return;
    };
    let mut store = Store::in_memory();
    let corners = [(47.0, 8.0), (47.0, 8.01), (47.01, 8.01), (47.01, 8.0)];
    let boundary = corners.iter().map(|&(la, lo)| GeoPosition::from_degrees(la, lo, 0, 0)).collect();
    store.add_square(SquareDefinition::new("M", "fuzz", boundary)).unwrap();
    if store.ingest_uplink(&env).is_ok() {
        assert_eq!(store.ingest_uplink(&env).unwrap(), IngestResult::Duplicate);
        assert_eq!(store.records().count(), 1);
    }
});
