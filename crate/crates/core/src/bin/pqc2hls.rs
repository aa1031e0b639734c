use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

fn main() -> ExitCode {
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(2);
        }
        eprintln!("interrupt: finishing the current attempt; press again to abort");
    }) {
        eprintln!("warning: no interrupt handler: {e}");
    }
    pqc2hls::cli::run(std::env::args_os(), cancel)
}
