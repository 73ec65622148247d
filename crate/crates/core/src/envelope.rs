use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_frame_hex, CodecError, SensorFrame};
use crate::model::{rfc3339, DevEui};

/// Gateway metadata wrapped around one raw application payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkEnvelope {
    pub dev_eui: DevEui,
    pub fcnt: u32,
    pub port: u8,
    /// 29-byte payload as 58 lowercase hex characters.
    pub payload_hex: String,
    pub rssi_dbm: i32,
    pub snr_db: f64,
    #[serde(with = "rfc3339")]
    pub received_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("port {0} outside 1..=223")]
    Port(u8),
    #[error(transparent)]
    Payload(#[from] CodecError),
}

impl UplinkEnvelope {
    /// Checks the port and decodes the payload.
    pub fn decode(&self) -> Result<SensorFrame, EnvelopeError> {
        if !(1..=223).contains(&self.port) {
            return Err(EnvelopeError::Port(self.port));
        }
        Ok(decode_frame_hex(&self.payload_hex)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::encode_frame_hex;
    use chrono::TimeZone;

    fn env(payload_hex: String) -> UplinkEnvelope {
        UplinkEnvelope {
            dev_eui: DevEui::from_u64(1),
            fcnt: 7,
            port: 1,
            payload_hex,
            rssi_dbm: -112,
            snr_db: -7.5,
            received_at: Utc.with_ymd_and_hms(2022, 6, 1, 2, 0, 0).unwrap(),
        }
    }

    #[test]
    fn json_shape() {
        let e = env(encode_frame_hex(&SensorFrame::default()).unwrap());
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v["dev_eui"], "0000000000000001");
        assert_eq!(v["received_at"], "2022-06-01T02:00:00Z");
        let back: UplinkEnvelope = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(
            env("00".repeat(28)).decode(),
            Err(EnvelopeError::Payload(CodecError::Length(28)))
        );
        let mut e = env(encode_frame_hex(&SensorFrame::default()).unwrap());
        e.port = 0;
        assert_eq!(e.decode(), Err(EnvelopeError::Port(0)));
        e.port = 224;
        assert_eq!(e.decode(), Err(EnvelopeError::Port(224)));
    }
}
