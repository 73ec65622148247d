//! Fixed 29-byte uplink payload.
//!
//! ```text
//! off  len  field
//!   0    1  header (layout version, 0x01)
//!   1    1  debug bitfield
//!   2    4  latitude, 1e-7 deg, i32
//!   6    4  longitude, 1e-7 deg, i32
//!  10    4  fix time, unix seconds, u32
//!  14    2  accuracy, dm, u16 (0xFFFF = no fix)
//!  16    1  battery, percent (0xFF = invalid)
//!  17    2  temperature, centi-degC, i16
//!  19    2  humidity, centi-%RH, u16
//!  21    4  sitting minutes per interval (0xFF = invalid)
//!  25    4  noise dBSPL per interval (0xFF = invalid)
//! ```
//!
//! All multi-byte fields are big-endian.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GeoPosition, LAT_E7_LIMIT, LON_E7_LIMIT, NO_FIX};

pub const FRAME_LEN: usize = 29;
pub const LAYOUT_V1: u8 = 0x01;
pub const INVALID_U8: u8 = 0xFF;

pub const MAX_SITTING_MIN: u8 = 30;
pub const MAX_NOISE_DB: u8 = 140;
pub const MAX_HUMIDITY_CRH: u16 = 10_000;
pub const MAX_BATTERY_PCT: u8 = 100;

pub const DEBUG_GNSS_FIX: u8 = 0b001;
pub const DEBUG_GNSS_TIMEOUT: u8 = 0b010;
pub const DEBUG_BATTERY_LOW: u8 = 0b100;
const DEBUG_RESERVED: u8 = !(DEBUG_GNSS_FIX | DEBUG_GNSS_TIMEOUT | DEBUG_BATTERY_LOW);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Header,
    Debug,
    Latitude,
    Longitude,
    Accuracy,
    Battery,
    Humidity,
    Sitting(usize),
    Noise(usize),
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Header => f.write_str("header"),
            Field::Debug => f.write_str("debug"),
            Field::Latitude => f.write_str("latitude"),
            Field::Longitude => f.write_str("longitude"),
            Field::Accuracy => f.write_str("accuracy"),
            Field::Battery => f.write_str("battery"),
            Field::Humidity => f.write_str("humidity"),
            Field::Sitting(i) => write!(f, "sitting[{i}]"),
            Field::Noise(i) => write!(f, "noise[{i}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("cannot encode frame: field {0} out of range")]
    Encode(Field),
    #[error("payload must be {FRAME_LEN} bytes, got {0}")]
    Length(usize),
    #[error("unknown payload layout 0x{0:02x}")]
    UnknownLayout(u8),
    #[error("decoded field {0} out of range")]
    Range(Field),
    #[error("payload is not valid hex: {0}")]
    Hex(String),
}

impl CodecError {
    /// Short machine-readable name used in API error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            CodecError::Encode(_) => "EncodeError",
            CodecError::Length(_) => "LengthError",
            CodecError::UnknownLayout(_) => "UnknownLayoutError",
            CodecError::Range(_) => "RangeError",
            CodecError::Hex(_) => "HexError",
        }
    }
}

/// Decoded uplink payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorFrame {
    pub header: u8,
    pub debug: u8,
    #[serde(flatten)]
    pub position: GeoPosition,
    pub battery_pct: u8,
    /// centi-degrees Celsius
    pub temperature_cc: i16,
    /// centi-percent relative humidity
    pub humidity_crh: u16,
    pub sitting_min: [u8; 4],
    pub noise_db: [u8; 4],
}

impl Default for SensorFrame {
    fn default() -> Self {
        Self {
            header: LAYOUT_V1,
            debug: 0,
            position: GeoPosition::default(),
            battery_pct: 0,
            temperature_cc: 0,
            humidity_crh: 0,
            sitting_min: [0; 4],
            noise_db: [0; 4],
        }
    }
}

impl SensorFrame {
    /// First field violating the layout invariants, if any.
    pub fn check(&self) -> Option<Field> {
        if self.header != LAYOUT_V1 {
            return Some(Field::Header);
        }
        if self.debug & DEBUG_RESERVED != 0 {
            return Some(Field::Debug);
        }
        let p = &self.position;
        if !(-LAT_E7_LIMIT..=LAT_E7_LIMIT).contains(&p.latitude_e7) {
            return Some(Field::Latitude);
        }
        if !(-LON_E7_LIMIT..=LON_E7_LIMIT).contains(&p.longitude_e7) {
            return Some(Field::Longitude);
        }
        if p.accuracy_dm == NO_FIX && (p.latitude_e7 != 0 || p.longitude_e7 != 0) {
            return Some(Field::Accuracy);
        }
        if self.battery_pct > MAX_BATTERY_PCT && self.battery_pct != INVALID_U8 {
            return Some(Field::Battery);
        }
        if self.humidity_crh > MAX_HUMIDITY_CRH {
            return Some(Field::Humidity);
        }
        for (i, &s) in self.sitting_min.iter().enumerate() {
            if s > MAX_SITTING_MIN && s != INVALID_U8 {
                return Some(Field::Sitting(i));
            }
        }
        for (i, &n) in self.noise_db.iter().enumerate() {
            if n > MAX_NOISE_DB && n != INVALID_U8 {
                return Some(Field::Noise(i));
            }
        }
        None
    }

    pub fn temperature_c(&self) -> f64 {
        self.temperature_cc as f64 / 100.0
    }

    pub fn humidity_rh(&self) -> f64 {
        self.humidity_crh as f64 / 100.0
    }

    pub fn battery(&self) -> Option<u8> {
        (self.battery_pct != INVALID_U8).then_some(self.battery_pct)
    }

    pub fn sitting(&self, i: usize) -> Option<u8> {
        let v = self.sitting_min[i];
        (v != INVALID_U8).then_some(v)
    }

    pub fn noise(&self, i: usize) -> Option<u8> {
        let v = self.noise_db[i];
        (v != INVALID_U8).then_some(v)
    }
}

pub fn encode_frame(f: &SensorFrame) -> Result<[u8; FRAME_LEN], CodecError> {
    if let Some(field) = f.check() {
        return Err(CodecError::Encode(field));
    }
    let mut out = [0u8; FRAME_LEN];
    out[0] = f.header;
    out[1] = f.debug;
    out[2..6].copy_from_slice(&f.position.latitude_e7.to_be_bytes());
    out[6..10].copy_from_slice(&f.position.longitude_e7.to_be_bytes());
    out[10..14].copy_from_slice(&f.position.fix_time_s.to_be_bytes());
    out[14..16].copy_from_slice(&f.position.accuracy_dm.to_be_bytes());
    out[16] = f.battery_pct;
    out[17..19].copy_from_slice(&f.temperature_cc.to_be_bytes());
    out[19..21].copy_from_slice(&f.humidity_crh.to_be_bytes());
    out[21..25].copy_from_slice(&f.sitting_min);
    out[25..29].copy_from_slice(&f.noise_db);
    Ok(out)
}

pub fn decode_frame(b: &[u8]) -> Result<SensorFrame, CodecError> {
    let b: &[u8; FRAME_LEN] = b.try_into().map_err(|_| CodecError::Length(b.len()))?;
    if b[0] != LAYOUT_V1 {
        return Err(CodecError::UnknownLayout(b[0]));
    }
    let be4 = |o: usize| [b[o], b[o + 1], b[o + 2], b[o + 3]];
    let be2 = |o: usize| [b[o], b[o + 1]];
    let frame = SensorFrame {
        header: b[0],
        debug: b[1],
        position: GeoPosition {
            latitude_e7: i32::from_be_bytes(be4(2)),
            longitude_e7: i32::from_be_bytes(be4(6)),
            fix_time_s: u32::from_be_bytes(be4(10)),
            accuracy_dm: u16::from_be_bytes(be2(14)),
        },
        battery_pct: b[16],
        temperature_cc: i16::from_be_bytes(be2(17)),
        humidity_crh: u16::from_be_bytes(be2(19)),
        sitting_min: [b[21], b[22], b[23], b[24]],
        noise_db: [b[25], b[26], b[27], b[28]],
    };
    match frame.check() {
        Some(field) => Err(CodecError::Range(field)),
        None => Ok(frame),
    }
}

/// Lowercase hex without separators.
pub fn encode_frame_hex(f: &SensorFrame) -> Result<String, CodecError> {
    encode_frame(f).map(hex::encode)
}

pub fn decode_frame_hex(s: &str) -> Result<SensorFrame, CodecError> {
    let bytes = hex::decode(s.trim()).map_err(|e| CodecError::Hex(e.to_string()))?;
    decode_frame(&bytes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn valid_frame() -> impl Strategy<Value = SensorFrame> {
        let pos = prop_oneof![
            (
                -LAT_E7_LIMIT..=LAT_E7_LIMIT,
                -LON_E7_LIMIT..=LON_E7_LIMIT,
                0u16..NO_FIX,
                any::<u32>()
            )
                .prop_map(|(la, lo, a, t)| GeoPosition::new(la, lo, a, t)),
            any::<u32>().prop_map(GeoPosition::no_fix),
        ];
        let opt = |max: u8| prop_oneof![0..=max, Just(INVALID_U8)];
        (
            0u8..8,
            pos,
            opt(MAX_BATTERY_PCT),
            any::<i16>(),
            0..=MAX_HUMIDITY_CRH,
            prop::array::uniform4(opt(MAX_SITTING_MIN)),
            prop::array::uniform4(opt(MAX_NOISE_DB)),
        )
            .prop_map(|(debug, position, battery_pct, temperature_cc, humidity_crh, sitting_min, noise_db)| {
                SensorFrame {
                    header: LAYOUT_V1,
                    debug,
                    position,
                    battery_pct,
                    temperature_cc,
                    humidity_crh,
                    sitting_min,
                    noise_db,
                }
            })
    }

    pub fn reference_frame() -> SensorFrame {
        SensorFrame {
            header: 0x01,
            debug: 0x01,
            position: GeoPosition::new(473_661_230, 85_517_310, 25, 1_700_000_000),
            battery_pct: 87,
            temperature_cc: 2150,
            humidity_crh: 5500,
            sitting_min: [12, 0, 30, 5],
            noise_db: [55, 60, 58, 52],
        }
    }

    #[test]
    fn reference_frame_matches_hand_packed_bytes() {
        // packed field by field with struct.pack('>BBiiIHBhH4B4B', ...)
        let expected = "01011c3b7f2e0518e3fe6553f1000019570866157c0c001e05373c3a34";
        assert_eq!(encode_frame_hex(&reference_frame()).unwrap(), expected);
        assert_eq!(decode_frame_hex(expected).unwrap(), reference_frame());
    }

    #[test]
    fn zero_frame() {
        let bytes = encode_frame(&SensorFrame::default()).unwrap();
        assert_eq!(bytes[0], 0x01);
        assert!(bytes[1..].iter().all(|&b| b == 0));
    }

    #[test]
    fn length_and_version_gates() {
        assert_eq!(decode_frame(&[1u8; 28]), Err(CodecError::Length(28)));
        assert_eq!(decode_frame(&[1u8; 30]), Err(CodecError::Length(30)));
        assert_eq!(decode_frame(&[]), Err(CodecError::Length(0)));
        let mut b = encode_frame(&reference_frame()).unwrap();
        b[0] = 0x02;
        assert_eq!(decode_frame(&b), Err(CodecError::UnknownLayout(0x02)));
        assert_eq!(decode_frame(&[0u8; 29]), Err(CodecError::UnknownLayout(0)));
    }

    #[test]
    fn out_of_range_fields() {
        let mut f = reference_frame();
        f.sitting_min[2] = 31;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Sitting(2))));
        let mut b = encode_frame(&reference_frame()).unwrap();
        b[23] = 31;
        assert_eq!(decode_frame(&b), Err(CodecError::Range(Field::Sitting(2))));

        let mut f = reference_frame();
        f.humidity_crh = 10_001;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Humidity)));
        let mut f = reference_frame();
        f.header = 2;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Header)));
        let mut f = reference_frame();
        f.debug = 0x08;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Debug)));
        let mut f = reference_frame();
        f.noise_db[3] = 141;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Noise(3))));
        let mut f = reference_frame();
        f.battery_pct = 101;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Battery)));
        let mut f = reference_frame();
        f.position.accuracy_dm = NO_FIX;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Accuracy)));
        let mut f = reference_frame();
        f.position.latitude_e7 = LAT_E7_LIMIT + 1;
        assert_eq!(encode_frame(&f), Err(CodecError::Encode(Field::Latitude)));
    }

    #[test]
    fn invalid_sentinels_accepted() {
        let mut f = reference_frame();
        f.battery_pct = INVALID_U8;
        f.sitting_min = [INVALID_U8; 4];
        f.noise_db = [INVALID_U8; 4];
        let back = decode_frame(&encode_frame(&f).unwrap()).unwrap();
        assert_eq!(back.battery(), None);
        assert_eq!(back.sitting(0), None);
        assert_eq!(back.noise(3), None);
    }

    #[test]
    fn bad_hex() {
        assert!(matches!(decode_frame_hex("0g"), Err(CodecError::Hex(_))));
        assert_eq!(decode_frame_hex(&"00".repeat(28)), Err(CodecError::Length(28)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn round_trip(f in valid_frame()) {
            let bytes = encode_frame(&f).unwrap();
            prop_assert_eq!(bytes.len(), FRAME_LEN);
            prop_assert_eq!(decode_frame(&bytes).unwrap(), f);
            prop_assert_eq!(encode_frame(&f).unwrap(), bytes);
        }

        #[test]
        fn decode_total_on_arbitrary_input(b in prop::collection::vec(any::<u8>(), 0..64)) {
            if let Ok(f) = decode_frame(&b) {
                prop_assert_eq!(&encode_frame(&f).unwrap()[..], &b[..]);
            }
        }
    }
}
