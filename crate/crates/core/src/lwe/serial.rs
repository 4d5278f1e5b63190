//! Text persistence for keys and ciphertexts.
//!
//! Both are JSON documents whose integers are decimal strings holding centered
//! residues, row-major:
//!
//! ```json
//! { "format": "cipherfleet-key/1",
//!   "params": { "p_exp": 10, "l_exp": 11, "key_length": 10, "err_bound": 100 },
//!   "sk": ["-3120...", "..."] }
//!
//! { "format": "cipherfleet-ciphertext/1",
//!   "params": { ... },
//!   "rows": [["body", "a1", "..."], ...] }
//! ```

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CipherConfig, CipherParams, Ciphertext, LweError, SecretKey};

pub const KEY_FORMAT: &str = "cipherfleet-key/1";
pub const CIPHERTEXT_FORMAT: &str = "cipherfleet-ciphertext/1";

#[derive(Debug, Error)]
pub enum SerialError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unexpected format tag {found:?}, expected {expected:?}")]
    Format { found: String, expected: &'static str },
    #[error("invalid integer {0:?}")]
    Integer(String),
    #[error(transparent)]
    Lwe(#[from] LweError),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyDoc {
    format: String,
    params: CipherConfig,
    sk: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CiphertextDoc {
    format: String,
    params: CipherConfig,
    rows: Vec<Vec<String>>,
}

fn parse(s: &str) -> Result<BigInt, SerialError> {
    s.parse().map_err(|_| SerialError::Integer(s.to_owned()))
}

fn check_format(found: String, expected: &'static str) -> Result<(), SerialError> {
    if found != expected {
        return Err(SerialError::Format { found, expected });
    }
    Ok(())
}

pub fn key_to_string(params: &CipherParams, key: &SecretKey) -> String {
    let doc = KeyDoc {
        format: KEY_FORMAT.to_owned(),
        params: params.config().clone(),
        sk: key.sk().iter().map(ToString::to_string).collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("key document serializes");
    out.push('\n');
    out
}

pub fn key_from_str(text: &str) -> Result<(CipherParams, SecretKey), SerialError> {
    let doc: KeyDoc = serde_json::from_str(text)?;
    check_format(doc.format, KEY_FORMAT)?;
    let params = CipherParams::new(doc.params)?;
    if doc.sk.len() != params.key_length() {
        return Err(LweError::DimensionMismatch(format!(
            "key file holds {} components, params say N = {}",
            doc.sk.len(),
            params.key_length()
        ))
        .into());
    }
    let sk = doc.sk.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>()?;
    Ok((params.clone(), SecretKey::from_components(&params, &sk)))
}

pub fn ciphertext_to_string(params: &CipherParams, ct: &Ciphertext) -> String {
    let doc = CiphertextDoc {
        format: CIPHERTEXT_FORMAT.to_owned(),
        params: params.config().clone(),
        rows: ct
            .rows()
            .iter()
            .map(|r| r.iter().map(ToString::to_string).collect())
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("ciphertext document serializes");
    out.push('\n');
    out
}

pub fn ciphertext_from_str(text: &str) -> Result<(CipherParams, Ciphertext), SerialError> {
    let doc: CiphertextDoc = serde_json::from_str(text)?;
    check_format(doc.format, CIPHERTEXT_FORMAT)?;
    let params = CipherParams::new(doc.params)?;
    let rows = doc
        .rows
        .iter()
        .map(|r| r.iter().map(|s| parse(s)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let ct = Ciphertext::from_rows(&params, rows)?;
    Ok((params, ct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lwe::{decrypt, encrypt, keygen, Rng};

    #[test]
    fn key_and_ciphertext_survive_text() {
        let params = CipherParams::new(CipherConfig::default()).unwrap();
        let mut rng = Rng::from_seed(4);
        let key = keygen(&params, &mut rng);
        let (p2, k2) = key_from_str(&key_to_string(&params, &key)).unwrap();
        assert_eq!(p2, params);
        assert_eq!(k2, key);

        let ct = encrypt(&params, &key, &[-17, 3], &mut rng).unwrap();
        let (_, ct2) = ciphertext_from_str(&ciphertext_to_string(&params, &ct)).unwrap();
        assert_eq!(ct2, ct);
        assert_eq!(decrypt(&params, &k2, &ct2), vec![-17, 3]);
    }

    #[test]
    fn rejects_wrong_tag_and_bad_digits() {
        let params = CipherParams::new(CipherConfig::default()).unwrap();
        let key = keygen(&params, &mut Rng::from_seed(1));
        let text = key_to_string(&params, &key);
        let wrong = text.replace(KEY_FORMAT, "other/1");
        assert!(matches!(key_from_str(&wrong), Err(SerialError::Format { .. })));
        let first = key.sk()[0].to_string();
        let bad = text.replacen(&first, "12x", 1);
        assert!(matches!(key_from_str(&bad), Err(SerialError::Integer(_))));
    }
}
