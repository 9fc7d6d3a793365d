//! Little-endian payload encoding. Scalars are their 8 raw bytes; vectors
//! carry a `u64` element count followed by the elements.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("payload is {actual} bytes, expected {expected}")]
    Length { expected: usize, actual: usize },
}

pub trait Wire: Sized {
    fn encode(&self) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self, WireError>;
}

macro_rules! scalar_wire {
    ($($t:ty),*) => {$(
        impl Wire for $t {
            fn encode(&self) -> Vec<u8> {
                self.to_le_bytes().to_vec()
            }

            fn decode(bytes: &[u8]) -> Result<Self, WireError> {
                let raw = bytes.try_into().map_err(|_| WireError::Length {
                    expected: std::mem::size_of::<$t>(),
                    actual: bytes.len(),
                })?;
                Ok(<$t>::from_le_bytes(raw))
            }
        }

        impl Wire for Vec<$t> {
            fn encode(&self) -> Vec<u8> {
                let mut out = Vec::with_capacity(8 + self.len() * std::mem::size_of::<$t>());
                out.extend_from_slice(&(self.len() as u64).to_le_bytes());
                for v in self {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out
            }

            fn decode(bytes: &[u8]) -> Result<Self, WireError> {
                let width = std::mem::size_of::<$t>();
                let body = declared_body(bytes, width)?;
                Ok(body
                    .chunks_exact(width)
                    .map(|c| <$t>::from_le_bytes(c.try_into().expect("exact chunk")))
                    .collect())
            }
        }
    )*};
}

scalar_wire!(f64, i64, u64, u8);

fn declared_body(bytes: &[u8], width: usize) -> Result<&[u8], WireError> {
    if bytes.len() < 8 {
        return Err(WireError::Length {
            expected: 8,
            actual: bytes.len(),
        });
    }
    let (head, body) = bytes.split_at(8);
    let count = u64::from_le_bytes(head.try_into().expect("8-byte header")) as usize;
    let expected = count.saturating_mul(width);
    if body.len() != expected {
        return Err(WireError::Length {
            expected: expected.saturating_add(8),
            actual: bytes.len(),
        });
    }
    Ok(body)
}
