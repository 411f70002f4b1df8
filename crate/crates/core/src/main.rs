fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    std::process::exit(korteweg::harness::cli::run(std::env::args_os()));
}
