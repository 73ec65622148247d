//! LoRa time-on-air (Semtech AN1200.13).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("spreading factor {0} outside 7..=12")]
    SpreadingFactor(u8),
    #[error("coding rate index {0} outside 1..=4")]
    CodingRate(u8),
    #[error("bandwidth must be positive")]
    Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub sf: u8,
    pub bw_hz: u32,
    /// 1 => 4/5 ... 4 => 4/8
    pub cr: u8,
    pub preamble_symbols: u16,
    pub explicit_header: bool,
    pub crc_on: bool,
    /// `None` selects the usual rule: enabled for SF11/SF12 at 125 kHz.
    pub low_data_rate_optimize: Option<bool>,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self::with_sf(12)
    }
}

impl RadioParams {
    pub fn with_sf(sf: u8) -> Self {
        Self {
            sf,
            bw_hz: 125_000,
            cr: 1,
            preamble_symbols: 8,
            explicit_header: true,
            crc_on: true,
            low_data_rate_optimize: None,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if !(7..=12).contains(&self.sf) {
            return Err(ParamError::SpreadingFactor(self.sf));
        }
        if !(1..=4).contains(&self.cr) {
            return Err(ParamError::CodingRate(self.cr));
        }
        if self.bw_hz == 0 {
            return Err(ParamError::Bandwidth);
        }
        Ok(())
    }

    pub fn ldro(&self) -> bool {
        self.low_data_rate_optimize
            .unwrap_or(self.sf >= 11 && self.bw_hz == 125_000)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Airtime {
    pub preamble_s: f64,
    pub payload_s: f64,
    pub total_s: f64,
}

pub fn symbol_time_s(p: &RadioParams) -> Result<f64, ParamError> {
    p.validate()?;
    Ok((1u64 << p.sf) as f64 / p.bw_hz as f64)
}

pub fn payload_symbol_count(p: &RadioParams, payload_len_bytes: usize) -> Result<u64, ParamError> {
    p.validate()?;
    let sf = p.sf as i64;
    let header = if p.explicit_header { 0 } else { 1 };
    let crc = if p.crc_on { 1 } else { 0 };
    let de = if p.ldro() { 1 } else { 0 };
    let num = 8 * payload_len_bytes as i64 - 4 * sf + 28 + 16 * crc - 20 * header;
    let den = 4 * (sf - 2 * de);
    // ceil for possibly negative numerators; den is always positive
    let blocks = num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0);
    let extra = (blocks * (p.cr as i64 + 4)).max(0);
    Ok(8 + extra as u64)
}

pub fn time_on_air(p: &RadioParams, payload_len_bytes: usize) -> Result<Airtime, ParamError> {
    let t_sym = symbol_time_s(p)?;
    let n = payload_symbol_count(p, payload_len_bytes)?;
    let preamble_s = (p.preamble_symbols as f64 + 4.25) * t_sym;
    let payload_s = n as f64 * t_sym;
    Ok(Airtime {
        preamble_s,
        payload_s,
        total_s: preamble_s + payload_s,
    })
}

/// LoRaWAN MHDR, FHDR without options, FPort and MIC.
pub const LORAWAN_MAC_OVERHEAD_BYTES: usize = 13;

/// Airtime of an application payload alone and with LoRaWAN framing added.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AirtimeReadings {
    pub payload_len: usize,
    pub payload_symbols: u64,
    pub payload_only: Airtime,
    pub mac_len: usize,
    pub mac_symbols: u64,
    pub with_mac_overhead: Airtime,
}

pub fn airtime_readings(p: &RadioParams, payload_len_bytes: usize) -> Result<AirtimeReadings, ParamError> {
    let mac_len = payload_len_bytes + LORAWAN_MAC_OVERHEAD_BYTES;
    Ok(AirtimeReadings {
        payload_len: payload_len_bytes,
        payload_symbols: payload_symbol_count(p, payload_len_bytes)?,
        payload_only: time_on_air(p, payload_len_bytes)?,
        mac_len,
        mac_symbols: payload_symbol_count(p, mac_len)?,
        with_mac_overhead: time_on_air(p, mac_len)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn symbol_times() {
        assert!((symbol_time_s(&RadioParams::with_sf(12)).unwrap() - 0.032768).abs() < EPS);
        assert!((symbol_time_s(&RadioParams::with_sf(7)).unwrap() - 0.001024).abs() < EPS);
        let p = RadioParams {
            bw_hz: 250_000,
            ..RadioParams::with_sf(7)
        };
        assert!((symbol_time_s(&p).unwrap() - 0.000512).abs() < EPS);
    }

    #[test]
    fn readings_add_mac_overhead() {
        let r = airtime_readings(&RadioParams::with_sf(7), 29).unwrap();
        assert_eq!(r.mac_len, 42);
        assert!((r.with_mac_overhead.payload_s - 0.074752).abs() < EPS);
        assert!((r.payload_only.payload_s - 0.054272).abs() < EPS);
    }

    #[test]
    fn symbol_counts() {
        assert_eq!(payload_symbol_count(&RadioParams::with_sf(12), 29).unwrap(), 38);
        assert_eq!(payload_symbol_count(&RadioParams::with_sf(7), 29).unwrap(), 53);
        assert_eq!(payload_symbol_count(&RadioParams::with_sf(7), 42).unwrap(), 73);
        assert_eq!(payload_symbol_count(&RadioParams::with_sf(12), 0).unwrap(), 8);
    }

    #[test]
    fn durations() {
        let a = time_on_air(&RadioParams::with_sf(12), 29).unwrap();
        assert!((a.payload_s - 1.245184).abs() < 1e-9);
        let a = time_on_air(&RadioParams::with_sf(7), 29).unwrap();
        assert!((a.payload_s - 0.054272).abs() < 1e-9);
        assert!((a.total_s - 0.066816).abs() < 1e-9);
        let a = time_on_air(&RadioParams::with_sf(7), 42).unwrap();
        assert!((a.payload_s - 0.074752).abs() < 1e-9);
    }

    #[test]
    fn invalid_params() {
        assert_eq!(symbol_time_s(&RadioParams::with_sf(6)), Err(ParamError::SpreadingFactor(6)));
        let p = RadioParams {
            cr: 5,
            ..RadioParams::default()
        };
        assert_eq!(time_on_air(&p, 1), Err(ParamError::CodingRate(5)));
        let p = RadioParams {
            bw_hz: 0,
            ..RadioParams::default()
        };
        assert_eq!(payload_symbol_count(&p, 1), Err(ParamError::Bandwidth));
    }

    #[test]
    fn implicit_header_and_no_crc_shorten() {
        let p = RadioParams {
            explicit_header: false,
            crc_on: false,
            ..RadioParams::with_sf(7)
        };
        // (232 - 28 + 28 - 20) / 28 = 7.57 -> 8 blocks
        assert_eq!(payload_symbol_count(&p, 29).unwrap(), 8 + 8 * 5);
    }

    fn params() -> impl Strategy<Value = RadioParams> {
        (7u8..=12, prop_oneof![Just(125_000u32), Just(250_000), Just(500_000)], 1u8..=4, 6u16..20, any::<bool>(), any::<bool>())
            .prop_map(|(sf, bw_hz, cr, preamble_symbols, explicit_header, crc_on)| RadioParams {
                sf,
                bw_hz,
                cr,
                preamble_symbols,
                explicit_header,
                crc_on,
                low_data_rate_optimize: None,
            })
    }

    proptest! {
        #[test]
        fn monotone_in_payload(p in params(), pl in 0usize..255) {
            let a = time_on_air(&p, pl).unwrap();
            let b = time_on_air(&p, pl + 1).unwrap();
            prop_assert!(b.total_s >= a.total_s);
            prop_assert!(payload_symbol_count(&p, pl).unwrap() >= 8);
        }

        #[test]
        fn doubling_bandwidth_halves(p in params(), pl in 0usize..255) {
            let p = RadioParams { low_data_rate_optimize: Some(p.ldro()), bw_hz: 125_000, ..p };
            let q = RadioParams { bw_hz: 250_000, ..p.clone() };
            let a = time_on_air(&p, pl).unwrap();
            let b = time_on_air(&q, pl).unwrap();
            prop_assert_eq!(b.preamble_s * 2.0, a.preamble_s);
            prop_assert_eq!(b.payload_s * 2.0, a.payload_s);
            prop_assert_eq!(b.total_s * 2.0, a.total_s);
        }
    }
}
