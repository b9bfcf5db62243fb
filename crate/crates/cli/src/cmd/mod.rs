use std::io::Write;
use std::path::Path;

use apr_core::dataio::{load_dataset, read_pair_list, DistilledPair, FrameSequence, PairSource};

use crate::args::{Cli, Command, DataArgs};
use crate::output::check_input;
use crate::CliError;

mod benchmark;
mod distill;
mod evaluate;
mod simulate;
mod train;

pub fn dispatch<W: Write>(cli: Cli, out: &mut W) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a, out),
        Command::Distill(a) => distill::run(&a, out),
        Command::Train(a) => train::run(&a, out),
        Command::Evaluate(a) => evaluate::run(&a, out),
        Command::Benchmark(a) => benchmark::run(&a, out),
    }
}

/// Loaded sequences behind a [`DataArgs`].
pub struct Data {
    a: FrameSequence,
    b: Option<FrameSequence>,
}

impl Data {
    pub fn check(args: &DataArgs) -> Result<(), CliError> {
        check_input(&args.data)?;
        if let Some(b) = &args.data_b {
            check_input(b)?;
        }
        Ok(())
    }

    pub fn load(args: &DataArgs) -> Result<Self, CliError> {
        let a = load_dataset(&args.data)?.0;
        let b = match &args.data_b {
            Some(p) => Some(load_dataset(p)?.0),
            None => None,
        };
        Ok(Self { a, b })
    }

    pub fn source(&self) -> PairSource<'_> {
        match &self.b {
            Some(b) => PairSource::Cross(&self.a, b),
            None => PairSource::Single(&self.a),
        }
    }
}

pub fn load_pairs(path: &Path) -> Result<Vec<DistilledPair>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_pair_list(std::io::BufReader::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn report<W: Write>(out: &mut W, text: std::fmt::Arguments<'_>) -> Result<(), CliError> {
    writeln!(out, "{text}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}
