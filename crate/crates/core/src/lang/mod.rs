//! The structured instruction language exchanged between agent and oracle.

mod codec;
mod grammar;

pub use codec::{
    corrupt, dead_reckon, decode_actions, decode_direction, decoded_endpoint, encode_pathlet,
    encode_pathlet_scaled, endpoint_sector, CodecError, NoiseConfig,
};
pub use grammar::{parse, Clause, Kind, Message, ParseError, Side, UNIT_TOLERANCE};
