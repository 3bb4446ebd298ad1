use base64::Engine as _;
use ring::aead::{Aad, LessSafeKey, Nonce, UnboundKey, CHACHA20_POLY1305, NONCE_LEN};
use ring::digest;
use ring::rand::{SecureRandom, SystemRandom};
use serde_json::Value;
use zeroize::Zeroizing;

use super::session::{RitualEvent, RitualSession};
use crate::error::EngineError;

pub const SEAL_KEY_ENV: &str = "WW_SEAL_KEY";
pub const WWR_MAGIC: &[u8; 4] = b"WWR1";

/// 256-bit ChaCha20-Poly1305 key. `key_id` is a public fingerprint (first 8
/// bytes of SHA-256 of the key, hex) stored with each record and bound in as
/// associated data.
pub struct SealKey {
    key: Zeroizing<[u8; 32]>,
    key_id: String,
}

impl std::fmt::Debug for SealKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SealKey").field("key_id", &self.key_id).finish_non_exhaustive()
    }
}

impl SealKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Self {
        let fingerprint = digest::digest(&digest::SHA256, &bytes);
        let key_id = hex::encode(&fingerprint.as_ref()[..8]);
        Self { key: Zeroizing::new(bytes), key_id }
    }

    /// 64 hex characters.
    pub fn from_hex(text: &str) -> Result<Self, EngineError> {
        let raw = Zeroizing::new(
            hex::decode(text.trim()).map_err(|_| EngineError::InvalidConfig("seal key is not valid hex".into()))?,
        );
        let bytes: [u8; 32] = raw
            .as_slice()
            .try_into()
            .map_err(|_| EngineError::InvalidConfig(format!("seal key must be 32 bytes, got {}", raw.len())))?;
        Ok(Self::from_bytes(bytes))
    }

    /// The key from `WW_SEAL_KEY`, or `None` when unset.
    pub fn from_env() -> Result<Option<Self>, EngineError> {
        match std::env::var(SEAL_KEY_ENV) {
            Ok(v) => Self::from_hex(&Zeroizing::new(v)).map(Some),
            Err(_) => Ok(None),
        }
    }

    pub fn generate() -> Result<Self, EngineError> {
        let mut bytes = [0u8; 32];
        SystemRandom::new().fill(&mut bytes).map_err(|_| EngineError::SealFailed("no randomness".into()))?;
        Ok(Self::from_bytes(bytes))
    }

    /// A fixed, publicly known key for offline mock runs. Records sealed
    /// with it are not private.
    pub fn mock() -> Self {
        let d = digest::digest(&digest::SHA256, b"ww mock seal key");
        Self::from_bytes(d.as_ref().try_into().unwrap())
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    fn aead(&self) -> LessSafeKey {
        LessSafeKey::new(UnboundKey::new(&CHACHA20_POLY1305, self.key.as_ref()).expect("32-byte key"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedRecord {
    pub session_id: String,
    /// Ciphertext with the 16-byte tag appended.
    pub ciphertext: Vec<u8>,
    pub nonce: Vec<u8>,
    pub key_id: String,
    /// Unix seconds; not part of the file format.
    pub created_at: Option<u64>,
}

impl EncryptedRecord {
    /// `WWR1`, u32 LE key-id length, key id, u32 LE nonce length, nonce,
    /// then the ciphertext to the end.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.key_id.len() + self.nonce.len() + self.ciphertext.len());
        out.extend_from_slice(WWR_MAGIC);
        out.extend_from_slice(&(self.key_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.key_id.as_bytes());
        out.extend_from_slice(&(self.nonce.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.ciphertext);
        out
    }

    pub fn from_bytes(session_id: impl Into<String>, bytes: &[u8]) -> Result<Self, EngineError> {
        let bad = |m: &str| EngineError::MalformedRecord(m.to_string());
        let rest = bytes.strip_prefix(WWR_MAGIC.as_slice()).ok_or_else(|| bad("missing WWR1 magic"))?;
        let (key_id, rest) = take_field(rest).ok_or_else(|| bad("truncated key id"))?;
        let (nonce, ciphertext) = take_field(rest).ok_or_else(|| bad("truncated nonce"))?;
        let key_id = String::from_utf8(key_id.to_vec()).map_err(|_| bad("key id is not UTF-8"))?;
        if nonce.len() != NONCE_LEN {
            return Err(bad("nonce must be 12 bytes"));
        }
        Ok(Self {
            session_id: session_id.into(),
            ciphertext: ciphertext.to_vec(),
            nonce: nonce.to_vec(),
            key_id,
            created_at: None,
        })
    }
}

fn take_field(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let len = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let field = bytes.get(4..4 + len)?;
    Some((field, &bytes[4 + len..]))
}

/// Serializes with object keys sorted at every level and no whitespace.
pub fn canonical_json(value: &Value) -> Vec<u8> {
    fn write(value: &Value, out: &mut Vec<u8>) {
        match value {
            Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push(b'{');
                for (i, k) in keys.into_iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    out.extend(serde_json::to_vec(k).expect("string"));
                    out.push(b':');
                    write(&map[k], out);
                }
                out.push(b'}');
            }
            Value::Array(items) => {
                out.push(b'[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(b',');
                    }
                    write(item, out);
                }
                out.push(b']');
            }
            scalar => out.extend(serde_json::to_vec(scalar).expect("scalar")),
        }
    }
    let mut out = Vec::new();
    write(value, &mut out);
    out
}

/// The sealed plaintext: confession (text and f32 audio), emotion and
/// transcript. The session id is left out so that identical sessions give
/// identical plaintext.
pub(crate) fn session_plaintext(session: &RitualSession) -> Zeroizing<Vec<u8>> {
    let confession = session.confession.as_ref().map(|c| {
        let audio = c.audio.as_ref().map(|a| {
            let bytes: Zeroizing<Vec<u8>> =
                Zeroizing::new(a.samples().iter().flat_map(|&s| (s as f32).to_le_bytes()).collect());
            serde_json::json!({
                "sample_rate": a.sample_rate(),
                "samples_f32le_b64": base64::engine::general_purpose::STANDARD.encode(bytes.as_slice()),
            })
        });
        serde_json::json!({"text": c.text, "audio": audio})
    });
    let value = serde_json::json!({
        "confession": confession,
        "emotion": session.emotion,
        "transcript": session.transcript,
    });
    Zeroizing::new(canonical_json(&value))
}

/// Encrypts the session and clears its plaintext. Without a key the session
/// is discarded and `SealFailed` returned.
pub fn seal_session(session: &mut RitualSession, key: Option<&SealKey>) -> Result<EncryptedRecord, EngineError> {
    if session.phase() != super::Phase::Release || !session.stillness_reached() {
        return Err(EngineError::SealFailed(format!("cannot seal in phase {} before stillness", session.phase())));
    }
    let Some(key) = key else {
        session.advance(RitualEvent::Discard)?;
        return Err(EngineError::SealFailed("no seal key configured; session discarded".into()));
    };
    let mut nonce = [0u8; NONCE_LEN];
    SystemRandom::new().fill(&mut nonce).map_err(|_| EngineError::SealFailed("no randomness".into()))?;
    let mut buffer = session_plaintext(session);
    key.aead()
        .seal_in_place_append_tag(Nonce::assume_unique_for_key(nonce), Aad::from(key.key_id.as_bytes()), &mut *buffer)
        .map_err(|_| EngineError::SealFailed("encryption failed".into()))?;
    let record = EncryptedRecord {
        session_id: session.session_id.clone(),
        ciphertext: buffer.to_vec(),
        nonce: nonce.to_vec(),
        key_id: key.key_id.clone(),
        created_at: std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok().map(|d| d.as_secs()),
    };
    session.redact();
    session.advance(RitualEvent::SealComplete)?;
    Ok(record)
}

/// Decrypts and authenticates a record.
pub fn open_record(record: &EncryptedRecord, key: &SealKey) -> Result<Zeroizing<Vec<u8>>, EngineError> {
    if record.key_id != key.key_id {
        return Err(EngineError::MalformedRecord(format!(
            "record was sealed under key {}, not {}",
            record.key_id, key.key_id
        )));
    }
    let nonce: [u8; NONCE_LEN] =
        record.nonce.as_slice().try_into().map_err(|_| EngineError::MalformedRecord("bad nonce length".into()))?;
    let mut buffer = Zeroizing::new(record.ciphertext.clone());
    let len = key
        .aead()
        .open_in_place(Nonce::assume_unique_for_key(nonce), Aad::from(record.key_id.as_bytes()), &mut *buffer)
        .map_err(|_| EngineError::Authentication)?
        .len();
    buffer.truncate(len);
    Ok(buffer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ritual::{Confession, Phase};

    fn released(text: &str) -> RitualSession {
        let mut s = RitualSession::new();
        s.advance(RitualEvent::Begin).unwrap();
        s.advance(RitualEvent::RecordingComplete(Confession::text(text))).unwrap();
        s.advance(RitualEvent::AnalysisComplete).unwrap();
        s.advance(RitualEvent::ResponseAborted).unwrap();
        s.advance(RitualEvent::StillnessReached).unwrap();
        s
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let v = serde_json::json!({"b": 1, "a": {"z": [true, null], "m": "x"}});
        assert_eq!(canonical_json(&v), br#"{"a":{"m":"x","z":[true,null]},"b":1}"#);
    }

    #[test]
    fn seal_open_round_trip() {
        let key = SealKey::generate().unwrap();
        let mut s = released("I never called back");
        let expected = session_plaintext(&s).to_vec();
        let record = seal_session(&mut s, Some(&key)).unwrap();
        assert_eq!(s.phase(), Phase::Complete);
        assert!(s.is_sealed() && s.confession.is_none());
        assert_eq!(open_record(&record, &key).unwrap().as_slice(), expected.as_slice());

        let parsed = EncryptedRecord::from_bytes(&record.session_id, &record.to_bytes()).unwrap();
        assert_eq!(open_record(&parsed, &key).unwrap().as_slice(), expected.as_slice());
    }

    #[test]
    fn every_flipped_bit_is_detected() {
        let key = SealKey::generate().unwrap();
        let record = seal_session(&mut released("x"), Some(&key)).unwrap();
        for i in 0..record.ciphertext.len() * 8 {
            let mut bad = record.clone();
            bad.ciphertext[i / 8] ^= 1 << (i % 8);
            assert!(matches!(open_record(&bad, &key), Err(EngineError::Authentication)));
        }
    }

    #[test]
    fn wrong_key_rejected() {
        let record = seal_session(&mut released("x"), Some(&SealKey::generate().unwrap())).unwrap();
        assert!(open_record(&record, &SealKey::generate().unwrap()).is_err());
    }

    #[test]
    fn missing_key_discards() {
        let mut s = released("secret");
        assert!(matches!(seal_session(&mut s, None), Err(EngineError::SealFailed(_))));
        assert!(s.is_discarded() && !s.is_sealed());
        assert_eq!(s.phase(), Phase::Complete);
        assert!(!format!("{s:?}").contains("secret"));
    }

    #[test]
    fn hex_keys() {
        let hex = "00".repeat(31) + "01";
        let key = SealKey::from_hex(&hex).unwrap();
        assert_eq!(key.key_id().len(), 16);
        assert!(!format!("{key:?}").contains(&hex));
        assert!(SealKey::from_hex("abcd").is_err());
        assert!(SealKey::from_hex(&"zz".repeat(32)).is_err());
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(EncryptedRecord::from_bytes("s", b"WWR0").is_err());
        assert!(EncryptedRecord::from_bytes("s", b"WWR1\x05\x00\x00\x00ab").is_err());
    }

    #[test]
    fn nonces_differ_between_seals() {
        let key = SealKey::generate().unwrap();
        let a = seal_session(&mut released("same"), Some(&key)).unwrap();
        let b = seal_session(&mut released("same"), Some(&key)).unwrap();
        assert_ne!(a.nonce, b.nonce);
        assert_eq!(open_record(&a, &key).unwrap(), open_record(&b, &key).unwrap());
    }
}
