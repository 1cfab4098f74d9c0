//! Signature schemes.
//!
//! Two schemes are available. [`Scheme::TestMac`] is an HMAC-SHA256 keyed
//! MAC whose "public" key is the MAC key itself; it is fast and fully
//! deterministic, and is sound in the simulator because adversarial nodes are
//! only ever handed their own key material. [`Scheme::Ed25519`] is a real
//! public-key signature scheme for deployments where verifiers must not be
//! able to sign.

use alloc::vec::Vec;
use core::fmt;

use ed25519_dalek::{Signer as _, SigningKey, VerifyingKey};
use hmac::{Hmac, Mac};
use sha2::{Digest as _, Sha256};

type HmacSha256 = Hmac<Sha256>;

const MAC_KEY_DOMAIN: &[u8] = b"arma/test-mac/key";
const ED25519_KEY_DOMAIN: &[u8] = b"arma/ed25519/key";

/// Identifies the signature scheme of a key or signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    TestMac,
    Ed25519,
}

impl Scheme {
    pub const fn id(self) -> u64 {
        match self {
            Scheme::TestMac => 0,
            Scheme::Ed25519 => 1,
        }
    }

    pub const fn from_id(id: u64) -> Option<Scheme> {
        match id {
            0 => Some(Scheme::TestMac),
            1 => Some(Scheme::Ed25519),
            _ => None,
        }
    }

    /// Length in bytes of every signature produced under this scheme.
    pub const fn signature_len(self) -> usize {
        match self {
            Scheme::TestMac => 32,
            Scheme::Ed25519 => 64,
        }
    }

    pub const fn public_key_len(self) -> usize {
        32
    }

    /// Name used in configuration and key files.
    pub const fn name(self) -> &'static str {
        match self {
            Scheme::TestMac => "test_mac",
            Scheme::Ed25519 => "standard_signature",
        }
    }

    pub fn from_name(name: &str) -> Option<Scheme> {
        match name {
            "test_mac" => Some(Scheme::TestMac),
            "standard_signature" | "ed25519" => Some(Scheme::Ed25519),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey {
    pub scheme: Scheme,
    pub bytes: [u8; 32],
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({}:", self.scheme)?;
        for b in &self.bytes[..4] {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..)")
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature {
    pub scheme: Scheme,
    pub bytes: Vec<u8>,
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}:", self.scheme)?;
        for b in self.bytes.iter().take(4) {
            write!(f, "{b:02x}")?;
        }
        f.write_str("..)")
    }
}

impl Signature {
    /// A placeholder signature of the right length that never verifies under
    /// an honestly generated key.
    pub fn garbage(scheme: Scheme, fill: u8) -> Signature {
        Signature {
            scheme,
            bytes: alloc::vec![fill; scheme.signature_len()],
        }
    }
}

#[derive(Clone)]
pub struct KeyPair {
    pub scheme: Scheme,
    secret: [u8; 32],
    pub public: PublicKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("scheme", &self.scheme)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn secret_bytes(&self) -> &[u8; 32] {
        &self.secret
    }
}

fn derive(domain: &[u8], seed: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(domain);
    h.update(seed);
    h.finalize().into()
}

/// Deterministically derives a key pair from a 32-byte seed.
pub fn keygen(seed: &[u8; 32], scheme: Scheme) -> KeyPair {
    match scheme {
        Scheme::TestMac => {
            let secret = derive(MAC_KEY_DOMAIN, seed);
            KeyPair {
                scheme,
                secret,
                public: PublicKey {
                    scheme,
                    bytes: secret,
                },
            }
        }
        Scheme::Ed25519 => {
            let secret = derive(ED25519_KEY_DOMAIN, seed);
            let signing = SigningKey::from_bytes(&secret);
            KeyPair {
                scheme,
                secret,
                public: PublicKey {
                    scheme,
                    bytes: signing.verifying_key().to_bytes(),
                },
            }
        }
    }
}

pub fn sign(key: &KeyPair, message: &[u8]) -> Signature {
    let bytes = match key.scheme {
        Scheme::TestMac => {
            let mut mac =
                HmacSha256::new_from_slice(&key.secret).expect("hmac accepts any key length");
            mac.update(message);
            mac.finalize().into_bytes().to_vec()
        }
        Scheme::Ed25519 => SigningKey::from_bytes(&key.secret)
            .sign(message)
            .to_bytes()
            .to_vec(),
    };
    Signature {
        scheme: key.scheme,
        bytes,
    }
}

/// Returns `true` iff `sig` was produced over `message` by the key matching
/// `public`. Malformed or mismatched-scheme signatures simply fail.
pub fn verify(public: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    if sig.scheme != public.scheme || sig.bytes.len() != sig.scheme.signature_len() {
        return false;
    }
    match public.scheme {
        Scheme::TestMac => {
            let Ok(mut mac) = HmacSha256::new_from_slice(&public.bytes) else {
                return false;
            };
            mac.update(message);
            mac.verify_slice(&sig.bytes).is_ok()
        }
        Scheme::Ed25519 => {
            let Ok(vk) = VerifyingKey::from_bytes(&public.bytes) else {
                return false;
            };
            let Ok(raw): Result<[u8; 64], _> = sig.bytes.as_slice().try_into() else {
                return false;
            };
            vk.verify_strict(message, &ed25519_dalek::Signature::from_bytes(&raw))
                .is_ok()
        }
    }
}

/// SHA-256 over the concatenation of `parts`.
pub fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SCHEMES: [Scheme; 2] = [Scheme::TestMac, Scheme::Ed25519];

    #[test]
    fn keygen_is_deterministic() {
        for scheme in SCHEMES {
            let a = keygen(&[7; 32], scheme);
            let b = keygen(&[7; 32], scheme);
            assert_eq!(a.public, b.public);
            assert_eq!(a.secret_bytes(), b.secret_bytes());
        }
    }

    #[test]
    fn sign_then_verify() {
        for scheme in SCHEMES {
            let k = keygen(&[1; 32], scheme);
            let sig = sign(&k, b"hello");
            assert_eq!(sig.bytes.len(), scheme.signature_len());
            assert!(verify(&k.public, b"hello", &sig));
        }
    }

    #[test]
    fn malformed_signatures_fail_closed() {
        let k = keygen(&[1; 32], Scheme::Ed25519);
        let mut sig = sign(&k, b"m");
        sig.bytes.pop();
        assert!(!verify(&k.public, b"m", &sig));
        let mac = keygen(&[1; 32], Scheme::TestMac);
        let cross = sign(&mac, b"m");
        assert!(!verify(&k.public, b"m", &cross));
        assert!(!verify(
            &k.public,
            b"m",
            &Signature::garbage(Scheme::Ed25519, 0xff)
        ));
    }

    #[test]
    fn scheme_names_round_trip() {
        for scheme in SCHEMES {
            assert_eq!(Scheme::from_name(scheme.name()), Some(scheme));
            assert_eq!(Scheme::from_id(scheme.id()), Some(scheme));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn distinct_seeds_give_distinct_keys(a in any::<[u8; 32]>(), b in any::<[u8; 32]>()) {
            prop_assume!(a != b);
            for scheme in SCHEMES {
                prop_assert_ne!(keygen(&a, scheme).public, keygen(&b, scheme).public);
            }
        }

        #[test]
        fn tampered_message_fails(msg in proptest::collection::vec(any::<u8>(), 1..64), bit in 0usize..512) {
            for scheme in SCHEMES {
                let k = keygen(&[3; 32], scheme);
                let sig = sign(&k, &msg);
                let mut tampered = msg.clone();
                let i = bit % (tampered.len() * 8);
                tampered[i / 8] ^= 1 << (i % 8);
                prop_assert!(!verify(&k.public, &tampered, &sig));
            }
        }

        #[test]
        fn foreign_key_fails(seed in any::<[u8; 32]>(), msg in proptest::collection::vec(any::<u8>(), 0..64)) {
            prop_assume!(seed != [3; 32]);
            for scheme in SCHEMES {
                let k = keygen(&[3; 32], scheme);
                let other = keygen(&seed, scheme);
                prop_assert!(!verify(&other.public, &msg, &sign(&k, &msg)));
            }
        }
    }
}
