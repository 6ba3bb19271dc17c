use clap::{Parser, Subcommand};
use evidential_cli::{
    aux_cmd, config, eval_cmd, exit_code_for, repro, synth_gen, train_cmd, TOLERANCE_EXIT_CODE,
};

#[derive(Parser)]
#[command(
    name = "evidential",
    about = "Dirichlet and learned-confidence uncertainty estimation: data generation, training, scoring and evaluation",
    version
)]
struct Cli {
    /// Output directory (falls back to $EVIDENTIAL_OUT_DIR, then ./evidential-out).
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic mixture and ring OOD datasets as CSV.
    SynthGen(synth_gen::SynthGenArgs),
    /// Train one classifier per seed.
    Train(train_cmd::TrainArgs),
    /// Train a confidence head on a frozen classifier.
    TrainAux(aux_cmd::TrainAuxArgs),
    /// Score measures and write detection/selective reports.
    Eval(eval_cmd::EvalArgs),
    /// One-shot benchmark reproduction against the embedded table.
    ReproSynthetic(repro::ReproArgs),
}

fn main() {
    let cli = Cli::parse();
    let out_dir = config::resolve_out_dir(cli.out_dir.as_deref());
    let result = match &cli.command {
        Command::SynthGen(args) => synth_gen::run(args, &out_dir),
        Command::Train(args) => train_cmd::run(args, &out_dir),
        Command::TrainAux(args) => aux_cmd::run(args, &out_dir),
        Command::Eval(args) => eval_cmd::run(args, &out_dir),
        Command::ReproSynthetic(args) => match repro::run(args, &out_dir) {
            Ok(outcome) if !outcome.ok() => std::process::exit(TOLERANCE_EXIT_CODE),
            Ok(_) => Ok(()),
            Err(e) => Err(e),
        },
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code_for(&e));
    }
}
