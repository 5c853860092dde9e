# run_pipeline.py
"""
Run the end-to-end rotcloud smoke pipeline through the command line:
gen-data -> pretrain -> extract (train and test) -> svm, optionally followed by
the keypoint stage and the plots.
"""
import argparse
import os
import sys
import subprocess

# Python executable to use for running the CLI (ensures same environment)
PYTHON_EXECUTABLE = sys.executable
# Project root directory
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def rotcloud(*args):
    """Command list invoking the rotcloud CLI with the current interpreter."""
    return [PYTHON_EXECUTABLE, "-m", "rotcloud", *[str(a) for a in args]]


def run_pipeline_step(step_command_list, step_description=""):
    """
    Runs a single pipeline step and echoes its output.
    Returns the step's stdout on success and None on failure.
    """
    if not step_description:
        step_description = " ".join(step_command_list[3:5])

    print(f"\n{'='*10} RUNNING STEP: {step_description} {'='*10}")
    print(f"Executing command: {' '.join(step_command_list)}")

    env = dict(os.environ)
    src_dir = os.path.join(PROJECT_ROOT, "src")
    env["PYTHONPATH"] = os.pathsep.join(p for p in (src_dir, env.get("PYTHONPATH")) if p)
    try:
        process = subprocess.run(
            step_command_list,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=PROJECT_ROOT,
            env=env,
            text=True,
        )
    except FileNotFoundError:
        print(f"ERROR: Executable '{step_command_list[0]}' not found.")
        return None

    if process.stdout:
        print(f"--- STDOUT ---\n{process.stdout}")
    if process.returncode != 0:
        # Training logs go to stderr; only show them when the step failed
        if process.stderr:
            print(f"--- STDERR ---\n{process.stderr}")
        print(f"ERROR: Step '{step_description}' failed with return code {process.returncode}")
        return None
    print(f"SUCCESS: Step '{step_description}' completed.")
    return process.stdout


def pipeline_steps(work_dir, k, epochs, seed, threads, keypoints):
    data = os.path.join(work_dir, "data")
    model = os.path.join(work_dir, f"pretext_k{k}.bin")
    common = ["--seed", seed, "--threads", threads]
    steps = [
        ("gen-data", rotcloud("gen-data", "--out", data, *common)),
        ("pretrain", rotcloud("pretrain", "--task", "classify", "--k", k, "--data", data,
                              "--epochs", epochs, "--out", model, *common)),
        ("eval-rotation", rotcloud("eval-rotation", "--model", model, "--data", data,
                                   "--out-dir", work_dir, *common)),
        ("extract train", rotcloud("extract", "--model", model, "--data", data, "--split", "train",
                                   "--out", os.path.join(work_dir, "feats_train.csv"), "--threads", threads)),
        ("extract test", rotcloud("extract", "--model", model, "--data", data, "--split", "test",
                                  "--out", os.path.join(work_dir, "feats_test.csv"), "--threads", threads)),
        ("svm", rotcloud("svm", "--train", os.path.join(work_dir, "feats_train.csv"),
                         "--test", os.path.join(work_dir, "feats_test.csv"), "--out-dir", work_dir)),
        ("sweep", rotcloud("sweep", "--train", os.path.join(work_dir, "feats_train.csv"),
                           "--test", os.path.join(work_dir, "feats_test.csv"), "--seed", seed,
                           "--out", os.path.join(work_dir, "sweep.csv"))),
    ]
    if keypoints:
        kp_model = os.path.join(work_dir, "keypoints.bin")
        steps += [
            ("keypoints", rotcloud("keypoints", "--init", model, "--data", data, "--epochs", epochs,
                                   "--out", kp_model, *common)),
            ("pck", rotcloud("pck", "--model", kp_model, "--data", data,
                             "--out", os.path.join(work_dir, "pck.csv"), "--threads", threads)),
            ("plot pck", rotcloud("plot", "--kind", "pck", "--inputs", os.path.join(work_dir, "pck.csv"),
                                  "--out", os.path.join(work_dir, "pck.svg"))),
        ]
    steps.append(("plot sweep", rotcloud("plot", "--kind", "sweep", "--inputs", os.path.join(work_dir, "sweep.csv"),
                                         "--out", os.path.join(work_dir, "sweep.svg"))))
    return steps


def main():
    parser = argparse.ArgumentParser(description="rotcloud end-to-end pipeline")
    parser.add_argument("--work-dir", default="runs/pipeline", help="Directory for all pipeline artifacts")
    parser.add_argument("--k", type=int, default=18, help="Number of rotation classes")
    parser.add_argument("--epochs", type=int, default=30, help="Epochs for every training stage")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--keypoints", action="store_true", help="Also run keypoint fine-tuning and PCK")
    args = parser.parse_args()

    os.makedirs(args.work_dir, exist_ok=True)
    print(f"\n{'#'*20} STARTING PIPELINE IN {args.work_dir} {'#'*20}")
    last_stdout = None
    for description, command in pipeline_steps(args.work_dir, args.k, args.epochs, args.seed, args.threads, args.keypoints):
        stdout = run_pipeline_step(command, step_description=description)
        if stdout is None:
            print(f"\nPipeline aborted due to error in step '{description}'.")
            sys.exit(1)
        if description == "svm":
            last_stdout = stdout

    print(f"\n{'#'*20} PIPELINE COMPLETED SUCCESSFULLY {'#'*20}")
    if last_stdout:
        print(f"Final transfer result: {last_stdout.strip()}")


if __name__ == "__main__":
    main()
