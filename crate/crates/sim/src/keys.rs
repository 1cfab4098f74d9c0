//! Seeded key derivation and the `keys.json` public-key file.

use std::path::Path;

use arma_core::crypto::sha256;
use arma_core::{keygen, KeyPair, PublicKey, Scheme};
use serde::{Deserialize, Serialize};

fn derive(seed: u64, label: &[u8], index: u64, scheme: Scheme) -> KeyPair {
    let s = sha256(&[label, &seed.to_be_bytes(), &index.to_be_bytes()]);
    keygen(&s, scheme)
}

pub fn party_keys(seed: u64, n: usize, scheme: Scheme) -> Vec<KeyPair> {
    (0..n as u64)
        .map(|i| derive(seed, b"arma-sim/party", i, scheme))
        .collect()
}

pub fn client_keys(seed: u64, count: u32, scheme: Scheme) -> Vec<KeyPair> {
    (0..count as u64)
        .map(|i| derive(seed, b"arma-sim/client", i, scheme))
        .collect()
}

#[derive(Debug, thiserror::Error)]
pub enum KeysError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed keys file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown signature scheme {0:?}")]
    UnknownScheme(String),
    #[error("public key {index}: {reason}")]
    BadKey { index: usize, reason: String },
    #[error("{got} public keys listed for {parties} parties")]
    Count { parties: usize, got: usize },
}

/// Public key material needed to verify a ledger offline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeysFile {
    pub scheme: String,
    pub parties: usize,
    pub faults: usize,
    pub public_keys: Vec<String>,
}

impl KeysFile {
    pub fn new(scheme: Scheme, faults: usize, keys: &[PublicKey]) -> KeysFile {
        KeysFile {
            scheme: scheme.name().to_string(),
            parties: keys.len(),
            faults,
            public_keys: keys.iter().map(|k| hex::encode(k.bytes)).collect(),
        }
    }

    pub fn decode(&self) -> Result<Vec<PublicKey>, KeysError> {
        let scheme = Scheme::from_name(&self.scheme)
            .ok_or_else(|| KeysError::UnknownScheme(self.scheme.clone()))?;
        if self.public_keys.len() != self.parties {
            return Err(KeysError::Count {
                parties: self.parties,
                got: self.public_keys.len(),
            });
        }
        self.public_keys
            .iter()
            .enumerate()
            .map(|(index, h)| {
                let raw = hex::decode(h).map_err(|e| KeysError::BadKey {
                    index,
                    reason: e.to_string(),
                })?;
                let bytes: [u8; 32] = raw.try_into().map_err(|_| KeysError::BadKey {
                    index,
                    reason: "expected 32 bytes".into(),
                })?;
                Ok(PublicKey { scheme, bytes })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("keys serialize")
    }

    pub fn load(path: &Path) -> Result<KeysFile, KeysError> {
        let text = std::fs::read_to_string(path).map_err(|source| KeysError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_seeded_and_distinct() {
        let a = party_keys(7, 4, Scheme::Ed25519);
        let b = party_keys(7, 4, Scheme::Ed25519);
        let c = party_keys(8, 4, Scheme::Ed25519);
        assert_eq!(a[2].public, b[2].public);
        assert_ne!(a[2].public, c[2].public);
        assert_ne!(a[0].public, a[1].public);
        assert_ne!(client_keys(7, 1, Scheme::Ed25519)[0].public, a[0].public);
    }

    #[test]
    fn keys_file_round_trips() {
        let keys: Vec<PublicKey> = party_keys(1, 4, Scheme::Ed25519)
            .into_iter()
            .map(|k| k.public)
            .collect();
        let file = KeysFile::new(Scheme::Ed25519, 1, &keys);
        let back: KeysFile = serde_json::from_str(&file.to_json()).unwrap();
        assert_eq!(back.decode().unwrap(), keys);
        let mut short = back.clone();
        short.public_keys.pop();
        assert!(matches!(short.decode(), Err(KeysError::Count { .. })));
    }
}
