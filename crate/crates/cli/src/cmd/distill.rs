use std::io::Write;

use apr_core::dataio::{distill_pairs, write_pair_list, PairSpec};

use super::{report, Data};
use crate::args::DistillArgs;
use crate::output::{check_output, write_file};
use crate::CliError;

pub fn run<W: Write>(a: &DistillArgs, out: &mut W) -> Result<(), CliError> {
    Data::check(&a.data)?;
    check_output(&a.out, a.force)?;
    let spec = PairSpec::new(a.d1, a.d2, a.max_overlap)?;
    let data = Data::load(&a.data)?;
    let pairs = distill_pairs(data.source(), &spec, a.tau)?;
    if pairs.is_empty() && a.require_nonempty {
        return Err(CliError::Empty(format!(
            "no pair within [{}, {}] m with overlap ≤ {}",
            a.d1, a.d2, a.max_overlap
        )));
    }
    let mut buf = Vec::new();
    write_pair_list(&mut buf, &pairs)?;
    write_file(&a.out, &buf)?;
    report(out, format_args!("wrote {} pairs to {}", pairs.len(), a.out.display()))
}
