//! Public channel: message schema, framing and transports.

pub mod codec;
pub mod message;
pub mod transport;

pub use codec::{decode, encode, encode_payload};
pub use message::*;
pub use transport::{loopback_pair, Direction, Endpoint, Record, TcpTransport, Transport};

/// Key-correlated bits disclosed by a transcript.
///
/// Parity answers count one bit each, syndrome answers their length and sample
/// reveals their bit count. Indices, seeds, hashes and control messages count zero.
pub fn leak_meter<'a, I>(transcript: I) -> u64
where
    I: IntoIterator<Item = &'a Message>,
{
    transcript
        .into_iter()
        .map(|m| match &m.body {
            Body::BlockParity(ParityMsg::Answer(bits)) => bits.len() as u64,
            Body::Syndrome(SyndromeMsg::Answer(s)) => s.iter().map(|b| b.len() as u64).sum(),
            Body::SampleReveal(bits) => bits.len() as u64,
            _ => 0,
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use bitvec::prelude::*;

    use super::*;
    use crate::key::Bits;

    fn m(seq: u64, body: Body) -> Message {
        Message {
            session_id: 1,
            seq,
            body,
        }
    }

    #[test]
    fn three_parities() {
        let t = [m(
            0,
            Body::BlockParity(ParityMsg::Answer(bitvec![u64, Lsb0; 1, 0, 1])),
        )];
        assert_eq!(leak_meter(&t), 3);
    }

    #[test]
    fn hamming_syndrome() {
        let s: Bits = bitvec![u64, Lsb0; 1, 0, 1, 1];
        let t = [m(0, Body::Syndrome(SyndromeMsg::Answer(vec![s])))];
        assert_eq!(leak_meter(&t), 4);
    }

    #[test]
    fn sifting_discloses_nothing() {
        let t = [
            m(0, Body::SiftIndices(vec![3, 7, 9])),
            m(1, Body::Done(Phase::Sift)),
            m(
                2,
                Body::ShuffleSeed {
                    seed: 1,
                    pass: 0,
                    block_len: 8,
                },
            ),
            m(
                3,
                Body::VerifyHash {
                    key_seed: 1,
                    hash: 5,
                },
            ),
        ];
        assert_eq!(leak_meter(&t), 0);
    }
}
