//! Lossy uplink channel between the nodes and the server.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::UplinkEnvelope;
use crate::model::{rfc3339, DevEui};
use crate::rng::{hash3, unit};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("loss probability {0} outside [0, 1)")]
pub struct ChannelError(pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub loss_probability: f64,
    pub seed: u64,
    /// Devices that go permanently silent from the given instant on.
    #[serde(default, with = "dropout_map")]
    pub dropouts: BTreeMap<DevEui, DateTime<Utc>>,
}

impl ChannelModel {
    pub fn new(loss_probability: f64, seed: u64) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&loss_probability) {
            return Err(ChannelError(loss_probability));
        }
        Ok(Self {
            loss_probability,
            seed,
            dropouts: BTreeMap::new(),
        })
    }

    pub fn lossless() -> Self {
        Self {
            loss_probability: 0.0,
            seed: 0,
            dropouts: BTreeMap::new(),
        }
    }

    pub fn with_dropout(mut self, dev_eui: DevEui, at: DateTime<Utc>) -> Self {
        self.dropouts.insert(dev_eui, at);
        self
    }

    pub fn is_dropped_out(&self, dev_eui: &DevEui, at: &DateTime<Utc>) -> bool {
        self.dropouts.get(dev_eui).is_some_and(|t| at >= t)
    }
}

/// Whether the envelope reaches the server. A pure function of the channel
/// seed, device and frame counter, so replays lose the same frames.
pub fn channel_deliver(env: &UplinkEnvelope, ch: &ChannelModel) -> bool {
    if ch.is_dropped_out(&env.dev_eui, &env.received_at) {
        return false;
    }
    if ch.loss_probability <= 0.0 {
        return true;
    }
    unit(hash3(ch.seed, env.dev_eui.as_u64(), env.fcnt as u64)) >= ch.loss_probability
}

mod dropout_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<DevEui, DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
        let v: BTreeMap<String, String> = m.iter().map(|(k, t)| (k.to_string(), rfc3339::format(t))).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<DevEui, DateTime<Utc>>, D::Error> {
        let v = BTreeMap::<String, String>::deserialize(d)?;
        v.into_iter()
            .map(|(k, t)| {
                let eui = k.parse().map_err(serde::de::Error::custom)?;
                let at = rfc3339::parse(&t).map_err(serde::de::Error::custom)?;
                Ok((eui, at))
            })
            .collect()
    }
}
