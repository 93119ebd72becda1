import argparse
import json
import logging
import signal
import sys

from ablation import Strategy
from config import logging_level
from eval_metrics import EvalReport
from exceptions import ConfigError, DataError, KgabException
from kg_store import load_kg, write_kg
from path_engine import DirectionMode
from pcst import PcstMode
from qa_datasets import SynthSpec, convert_rog_jsonl, load_questions, synth_kg, write_questions, write_synth
from retrievers import RetrievalMethod
from runner import (
    ExperimentConfig, build_manifest, emit_report, evaluate_outputs, read_outputs, retrieve_one, run_experiment,
    run_sweep,
)

EXIT_UNEXPECTED = 1


def config_logging(verbose: bool = False):
    # Configure logging module parameters
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging_level,
        format='[%(levelname)s] [%(asctime)s] %(message)s',  # Set log format to include level time and message
        datefmt='%Y-%m-%d %H:%M:%S',  # Set datetime format for logging output
        handlers=[
            logging.StreamHandler()  # Output logs directly to the console stream
        ]
    )


def handle_sigterm(signum, frame):
    logging.warning('Received SIGTERM, exiting')
    raise SystemExit('terminated')


def parse_seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(',') if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f'seeds must be comma-separated integers, got {text!r}')


def add_experiment_args(parser: argparse.ArgumentParser):
    """Flags mirroring ExperimentConfig; left unset they defer to the experiment file."""
    parser.add_argument('--config', dest='config_file', help='TOML experiment file')
    parser.add_argument('--kg', dest='kg_path', help='triple file (head<TAB>relation<TAB>tail)')
    parser.add_argument('--questions', dest='questions_path', help='QA file (JSON lines)')
    parser.add_argument('--name', help='setting name used in reports')
    parser.add_argument('--strategy', choices=[s.value for s in Strategy])
    parser.add_argument('--rate', type=float, help='deletion rate for strategy random')
    parser.add_argument('--seed', type=int)
    parser.add_argument('--nested', action='store_true', default=None, help='nested random deletion sets')
    parser.add_argument('--isolated', action='store_true', default=None, help='per-question path disruption')
    parser.add_argument('--retriever', choices=[m.value for m in RetrievalMethod if m is not RetrievalMethod.NONE])
    parser.add_argument('--generator', choices=['mock', 'http'])
    parser.add_argument('--planner', choices=['oracle', 'llm'])
    parser.add_argument('--scorer', choices=['lexical', 'constant', 'llm'])
    parser.add_argument('--top-k-plans', type=int)
    parser.add_argument('--beam-width', type=int)
    parser.add_argument('--max-depth', type=int)
    parser.add_argument('--stop-threshold', type=float)
    parser.add_argument('--k-nodes', type=int)
    parser.add_argument('--hop-radius', type=int, choices=[1, 2])
    parser.add_argument('--edge-cost', type=float)
    parser.add_argument('--pcst-mode', choices=[m.value for m in PcstMode])
    parser.add_argument('--max-hops', type=int)
    parser.add_argument('--direction-mode', choices=[m.value for m in DirectionMode])
    parser.add_argument('--exact-label-only', action='store_true', default=None)
    parser.add_argument('--workers', type=int)
    parser.add_argument('--manifest', dest='manifest_path', help='replay this manifest instead of ablating')
    parser.add_argument('--baseline-report', help='report.json of the baseline run, for relative drops')
    parser.add_argument('--cache-label', help='sqlite response cache label for the HTTP generator')
    parser.add_argument('--offline', action='store_true', default=None, help='answer from the response cache only')


def experiment_config(args: argparse.Namespace, **extra) -> ExperimentConfig:
    overrides = {name: getattr(args, name) for name in ExperimentConfig.field_names() if hasattr(args, name)}
    overrides.update(extra)
    if args.config_file:
        return ExperimentConfig.from_toml(args.config_file, **overrides)
    return ExperimentConfig().with_overrides(**overrides)


def cmd_synth(args):
    dataset = synth_kg(SynthSpec(args.num_questions, args.redundancy, args.distractors, args.seed))
    write_synth(dataset, args.kg_out, args.qa_out)
    logging.info(f'Wrote {args.kg_out} and {args.qa_out}')


def cmd_convert(args):
    kg, questions = convert_rog_jsonl(args.input)
    write_kg(kg, args.kg_out)
    write_questions(questions, args.qa_out)
    logging.info(f'Wrote {args.kg_out} and {args.qa_out}')


def cmd_ablate(args):
    config = experiment_config(args).validate()
    kg = load_kg(config.kg_path)
    questions = load_questions(config.questions_path) if config.questions_path else []
    if config.strategy == Strategy.PATH_DISRUPTION.value and not questions:
        raise ConfigError('path_disruption needs --questions')
    build_manifest(config, kg, questions).write(args.out)


def cmd_retrieve(args):
    config = experiment_config(args)
    print(json.dumps(retrieve_one(config, args.question_id), indent=2, ensure_ascii=False))


def cmd_evaluate(args):
    questions = load_questions(args.questions_path)
    report = evaluate_outputs(read_outputs(args.outputs), questions, args.name or 'evaluated',
                              exact_label_only=args.exact_label_only)
    text = report.to_json()
    if args.out:
        with open(args.out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text)
        logging.info(f'Accuracy {report.accuracy:.2f}, Hits {report.hits:.2f} → {args.out}')
    else:
        sys.stdout.write(text)


def cmd_run(args):
    config = experiment_config(args, output_dir=args.out)
    if args.seeds:
        results, summary = run_sweep(config, args.seeds)
        print(f'{summary.setting}: Accuracy {summary.accuracy_mean:.2f} ± {summary.accuracy_std:.2f}, '
              f'Hits {summary.hits_mean:.2f} ± {summary.hits_std:.2f} over seeds {list(summary.seeds)}')
    else:
        report = run_experiment(config).report
        print(f'{report.setting}: Accuracy {report.accuracy:.2f}, Hits {report.hits:.2f}')


def cmd_report(args):
    runs = [EvalReport.read(path) for path in args.reports]
    markdown, data = emit_report(runs, args.baseline)
    if args.json_out:
        with open(args.json_out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(data)
    if args.md_out:
        with open(args.md_out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(markdown)
    else:
        sys.stdout.write(markdown)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='kgab', description='KG-RAG robustness under knowledge graph ablation')
    parser.add_argument('-v', '--verbose', action='store_true', help='debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', help='write a synthetic KG and QA file with controlled path redundancy')
    p.add_argument('--num-questions', type=int, default=200)
    p.add_argument('--redundancy', type=int, default=1)
    p.add_argument('--distractors', type=int, default=0)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--kg-out', required=True)
    p.add_argument('--qa-out', required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('convert', help='convert RoG-style JSON lines into a triple file and QA file')
    p.add_argument('--input', required=True)
    p.add_argument('--kg-out', required=True)
    p.add_argument('--qa-out', required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser('ablate', help='apply a deletion strategy and write its manifest')
    add_experiment_args(p)
    p.add_argument('--out', required=True, help='manifest path')
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser('retrieve', help='print the retrieval trace and prompt for one question')
    add_experiment_args(p)
    p.add_argument('--question-id', required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser('evaluate', help='score an outputs file against a QA file')
    p.add_argument('--questions', dest='questions_path', required=True)
    p.add_argument('--outputs', required=True, help='JSON lines with id and output')
    p.add_argument('--name', help='setting name')
    p.add_argument('--exact-label-only', action='store_true')
    p.add_argument('--out', help='report path, stdout if omitted')
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser('run', help='run the full pipeline for one setting')
    add_experiment_args(p)
    p.add_argument('--seeds', type=parse_seeds, help='comma-separated seed sweep')
    p.add_argument('--out', help='artifact directory')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('report', help='merge run reports into an Accuracy/Hits table')
    p.add_argument('reports', nargs='+', help='report.json files')
    p.add_argument('--baseline', required=True, help='setting name of the baseline run')
    p.add_argument('--md-out')
    p.add_argument('--json-out')
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    signal.signal(signal.SIGTERM, handle_sigterm)
    args = build_parser().parse_args(argv)
    config_logging(args.verbose)
    try:
        args.func(args)
    except KgabException as e:
        logging.error(f'{type(e).__name__}: {e}')
        return e.exit_code
    except OSError as e:
        logging.error(f'{e}')
        return DataError.exit_code
    except Exception as e:
        logging.exception(f'Unexpected failure: {e}')
        return EXIT_UNEXPECTED
    return 0


if __name__ == '__main__':
    sys.exit(main())
