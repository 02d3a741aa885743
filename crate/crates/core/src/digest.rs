use sha2::{Digest, Sha256};

/// Hex SHA-256 over `parts`, each terminated by a unit separator so that
/// `["ab", "c"]` and `["a", "bc"]` hash differently.
pub fn sha256_parts<I, P>(parts: I) -> String
where
    I: IntoIterator<Item = P>,
    P: AsRef<[u8]>,
{
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_ref());
        h.update([0x1f]);
    }
    hex::encode(h.finalize())
}

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}
