use std::fs;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use compresscheck::jpeg::pnm::write_image;
use compresscheck::jpeg::{decode, emit_jfif, encode, parse_jfif, psnr, CodecConfig, Subsampling};

use crate::common::{read_input, require_file, usage, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Chroma {
    #[value(name = "420")]
    S420,
    #[value(name = "444")]
    S444,
}

impl From<Chroma> for Subsampling {
    fn from(c: Chroma) -> Self {
        match c {
            Chroma::S420 => Subsampling::S420,
            Chroma::S444 => Subsampling::S444,
        }
    }
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Input image (PPM, or PNG).
    #[arg(long = "in")]
    input: PathBuf,
    /// JPEG quality, 1 to 100.
    #[arg(long, short)]
    q: u8,
    #[arg(long)]
    out: PathBuf,
    /// Chroma subsampling.
    #[arg(long, value_enum, default_value = "420")]
    subsampling: Chroma,
}

#[derive(Subcommand, Debug)]
pub enum CodecCommand {
    /// Compress and decompress, writing the decoded image.
    Roundtrip(EncodeArgs),
    /// Write a baseline JFIF file.
    Encode(EncodeArgs),
    /// Decode a baseline JFIF file written by `encode`.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR in dB between two images of equal size.
    Psnr { a: PathBuf, b: PathBuf },
}

fn config(a: &EncodeArgs) -> CliResult<CodecConfig> {
    Ok(CodecConfig::new(a.q).map_err(usage)?.with_subsampling(a.subsampling.into()))
}

pub fn run(cmd: CodecCommand) -> CliResult<()> {
    match cmd {
        CodecCommand::Roundtrip(a) => {
            let cfg = config(&a)?;
            let img = read_input(&a.input)?;
            write_image(&a.out, &decode(&encode(&img, &cfg)?)?)?;
        }
        CodecCommand::Encode(a) => {
            let cfg = config(&a)?.with_entropy_coding(true);
            let img = read_input(&a.input)?;
            fs::write(&a.out, emit_jfif(&encode(&img, &cfg)?)?)?;
        }
        CodecCommand::Decode { input, out } => {
            require_file(&input)?;
            let c = parse_jfif(&fs::read(&input)?)?;
            write_image(&out, &decode(&c)?)?;
        }
        CodecCommand::Psnr { a, b } => {
            let v = psnr(&read_input(&a)?, &read_input(&b)?)?;
            println!("{v:.4}");
        }
    }
    Ok(())
}
