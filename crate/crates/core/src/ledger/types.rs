use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FieldError {
    #[error("{field} must be exactly {expected} lowercase hex characters (got {found:?})")]
    Hex {
        field: &'static str,
        expected: usize,
        found: String,
    },
    #[error("{0} must not be empty")]
    Empty(&'static str),
}

fn check_lower_hex(field: &'static str, s: &str, expected: usize) -> Result<(), FieldError> {
    let ok = s.len() == expected
        && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
    if ok {
        Ok(())
    } else {
        Err(FieldError::Hex {
            field,
            expected,
            found: s.to_string(),
        })
    }
}

macro_rules! hex_newtype {
    ($name:ident, $field:literal, $len:literal) => {
        #[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(String);

        impl $name {
            pub fn parse(s: &str) -> Result<Self, FieldError> {
                check_lower_hex($field, s, $len)?;
                Ok(Self(s.to_string()))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = FieldError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::parse(s)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.0)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::parse(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(Md5Index, "md5 index", 32);
hex_newtype!(Sha256Hex, "sha256", 64);

/// A notarized data asset. The md5 digest is the unique on-chain index; the
/// SHA-256 digest is carried alongside as the collision-resistant attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetRecord {
    pub md5_index: Md5Index,
    pub sha256: Sha256Hex,
    pub source_uri: String,
    /// Epoch milliseconds at which the ingest pipeline hashed the file.
    pub processed_ts: u64,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_md5: Option<Md5Index>,
}

impl AssetRecord {
    pub(crate) fn encode(&self, w: &mut Writer) {
        w.put_str(self.md5_index.as_str())
            .put_str(self.sha256.as_str())
            .put_str(&self.source_uri)
            .put_u64(self.processed_ts)
            .put_u32(self.metadata.len() as u32);
        for (k, v) in &self.metadata {
            w.put_str(k).put_str(v);
        }
        match &self.parent_md5 {
            Some(p) => {
                w.put_u8(1).put_str(p.as_str());
            }
            None => {
                w.put_u8(0);
            }
        }
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let md5_index = Md5Index::parse(&r.string()?)
            .map_err(|_| DecodeError::InvalidValue("md5 index"))?;
        let sha256 =
            Sha256Hex::parse(&r.string()?).map_err(|_| DecodeError::InvalidValue("sha256"))?;
        let source_uri = r.string()?;
        let processed_ts = r.u64()?;
        let count = r.u32()?;
        let mut metadata = BTreeMap::new();
        let mut last: Option<String> = None;
        for _ in 0..count {
            let k = r.string()?;
            let v = r.string()?;
            // strictly ascending keys: one encoding per map
            if last.as_ref().is_some_and(|prev| *prev >= k) {
                return Err(DecodeError::InvalidValue("metadata key order"));
            }
            last = Some(k.clone());
            metadata.insert(k, v);
        }
        let parent_md5 = if r.bool()? {
            Some(
                Md5Index::parse(&r.string()?)
                    .map_err(|_| DecodeError::InvalidValue("parent md5"))?,
            )
        } else {
            None
        };
        Ok(AssetRecord {
            md5_index,
            sha256,
            source_uri,
            processed_ts,
            metadata,
            parent_md5,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Permission {
    Connect,
    Send,
    Receive,
    Mine,
    Admin,
}

impl Permission {
    pub const ALL: [Permission; 5] = [
        Permission::Connect,
        Permission::Send,
        Permission::Receive,
        Permission::Mine,
        Permission::Admin,
    ];

    fn bit(self) -> u8 {
        match self {
            Permission::Connect => 1,
            Permission::Send => 2,
            Permission::Receive => 4,
            Permission::Mine => 8,
            Permission::Admin => 16,
        }
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Permission::Connect => "connect",
            Permission::Send => "send",
            Permission::Receive => "receive",
            Permission::Mine => "mine",
            Permission::Admin => "admin",
        };
        f.write_str(s)
    }
}

/// A set of [`Permission`]s, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Permissions(u8);

impl Permissions {
    const MASK: u8 = 0b1_1111;

    pub const fn empty() -> Self {
        Permissions(0)
    }

    pub fn all() -> Self {
        Permissions(Self::MASK)
    }

    pub fn of(perms: &[Permission]) -> Self {
        Permissions(perms.iter().fold(0, |acc, p| acc | p.bit()))
    }

    pub fn contains(self, p: Permission) -> bool {
        self.0 & p.bit() != 0
    }

    pub fn union(self, other: Permissions) -> Self {
        Permissions(self.0 | other.0)
    }

    pub fn difference(self, other: Permissions) -> Self {
        Permissions(self.0 & !other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Permission> {
        Permission::ALL.into_iter().filter(move |p| self.contains(*p))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::MASK == 0).then_some(Permissions(bits))
    }
}

impl fmt::Debug for Permissions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for Permissions {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for Permissions {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<Permission>::deserialize(d)?;
        Ok(Permissions::of(&v))
    }
}

/// Assigns (`granted = true`) or revokes a set of capabilities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionGrant {
    pub subject: NodeId,
    pub permissions: Permissions,
    pub granted: bool,
    pub issuer: NodeId,
}

impl PermissionGrant {
    pub(crate) fn encode(&self, w: &mut Writer) {
        w.put_bytes(self.subject.as_bytes())
            .put_u8(self.permissions.bits())
            .put_u8(self.granted as u8)
            .put_bytes(self.issuer.as_bytes());
    }

    pub(crate) fn decode(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let subject = crate::crypto::Address(r.fixed::<20>()?);
        let permissions = Permissions::from_bits(r.u8()?)
            .ok_or(DecodeError::InvalidValue("permission bits"))?;
        let granted = r.bool()?;
        let issuer = crate::crypto::Address(r.fixed::<20>()?);
        Ok(PermissionGrant {
            subject,
            permissions,
            granted,
            issuer,
        })
    }
}

/// Free-form operational event (node joined, node retired, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub event: String,
    pub detail: String,
}
