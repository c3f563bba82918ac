//! Sparsity-aware transform coding: vector codecs, image blocking and per-position codec banks.

pub mod bank;
pub mod codec;
pub mod image;

pub use bank::{image_codec_train, read_bank, read_stream, write_bank, write_stream, BankConfig, CodecBank, Domain, EncodedImage, TransformKind};
pub use codec::{pca_tc_train, read_codec, satc_decode, satc_encode, satc_train, write_codec, SatcCodec};
pub use image::{blockize, deblockize, encode_pgm, parse_pgm, read_pgm, snr_im, write_pgm, BlockGrid, GrayImage};
