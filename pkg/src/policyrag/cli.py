"""Command-line entry points tying the workbench together.

Settings resolve in precedence order: explicit CLI option, environment
variable, config file (JSON passed via --config), built-in default.
Recognized env vars: LLM_ENDPOINT, LLM_API_KEY, LLM_TIMEOUT_MS,
POLICYRAG_STATE_DIR, POLICYRAG_CONTEXT_BUDGET, POLICYRAG_SEED.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import click

from . import annotation, contrastive, corpus as corpus_mod, dpo as dpo_mod
from . import evalsuite, pipeline, retriever as retriever_mod, synthqgen
from .encoder import EncoderParams


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _setting(ctx, key: str, env_var: str | None, default):
    if env_var and env_var in os.environ:
        return os.environ[env_var]
    return ctx.obj["config"].get(key, default)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file with defaults for endpoints, budgets, seeds.")
@click.pass_context
def main(ctx, config_path):
    """Workbench for retrieval-augmented QA over chunked policy corpora."""
    ctx.ensure_object(dict)
    ctx.obj["config"] = _load_config(config_path)


def _default_backend(ctx) -> str:
    return _setting(ctx, "llm_backend", "LLM_ENDPOINT", "mock")


def _default_state_dir(ctx) -> str:
    return _setting(ctx, "state_dir", "POLICYRAG_STATE_DIR", "workbench-state")


def _default_budget(ctx) -> int:
    return int(_setting(ctx, "context_char_budget", "POLICYRAG_CONTEXT_BUDGET",
                        pipeline.DEFAULT_CONTEXT_CHAR_BUDGET))


def _default_seed(ctx) -> int:
    return int(_setting(ctx, "seed", "POLICYRAG_SEED", 0))


@main.command()
@click.argument("input_file", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Re-export the corpus after ingest.")
def ingest(input_file, out):
    """Validate and load a chunk record file."""
    loaded = corpus_mod.ingest(input_file)
    click.echo(f"documents: {loaded.doc_count}")
    click.echo(f"chunks: {loaded.chunk_count}")
    if out:
        corpus_mod.export(loaded, out)
        click.echo(f"exported to {out}")


@main.command()
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the full stats as JSON.")
@click.option("--top", default=10, show_default=True, help="How many tags/authorities to list.")
def stats(corpus_file, as_json, top):
    """Corpus statistics: sizes, lengths, tag/authority/date frequencies."""
    report = corpus_mod.stats(corpus_mod.ingest(corpus_file))
    if as_json:
        payload = {
            "doc_count": report.doc_count,
            "chunk_count": report.chunk_count,
            "mean_seg_words": report.mean_seg_words,
            "mean_segs_per_doc": report.mean_segs_per_doc,
            "doc_length_hist": report.doc_length_hist,
            "seg_length_hist": report.seg_length_hist,
            "segs_per_doc_hist": report.segs_per_doc_hist,
            "top_tags": list(report.top_tags),
            "top_authorities": list(report.top_authorities),
            "date_hist": report.date_hist,
        }
        click.echo(json.dumps(payload, indent=2))
        return
    click.echo(f"documents: {report.doc_count}")
    click.echo(f"chunks: {report.chunk_count}")
    click.echo(f"mean segment words: {report.mean_seg_words:.2f}")
    click.echo(f"mean segments per document: {report.mean_segs_per_doc:.2f}")
    click.echo(f"top tags: {', '.join(f'{t} ({c})' for t, c in report.top_tags[:top]) or '(none)'}")
    click.echo(
        "top authorities: "
        + (", ".join(f"{a} ({c})" for a, c in report.top_authorities[:top]) or "(none)")
    )
    if report.date_hist:
        months = sorted(report.date_hist)
        click.echo(f"date range: {months[0]} .. {months[-1]}")


@main.command("init-params")
@click.option("--out", type=click.Path(), required=True)
@click.option("--base-dim", default=256, show_default=True)
@click.option("--out-dim", default=64, show_default=True)
@click.option("--seed", default=None, type=int)
@click.pass_context
def init_params(ctx, out, base_dim, out_dim, seed):
    """Create a fresh encoder parameter file."""
    seed = _default_seed(ctx) if seed is None else seed
    EncoderParams.initialize(base_dim=base_dim, out_dim=out_dim, hash_seed=seed).save(out)
    click.echo(f"wrote encoder params to {out}")


@main.group()
def index():
    """Build and query the late-interaction index."""


@index.command("build")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--params", "params_file", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def index_build(corpus_file, params_file, out):
    loaded = corpus_mod.ingest(corpus_file)
    params = EncoderParams.load(params_file)
    built = retriever_mod.build_index(loaded, params)
    retriever_mod.save_index(built, out)
    click.echo(f"indexed {len(built)} chunks (skipped {len(built.skipped_chunk_ids)})")


@index.command("search")
@click.option("--index", "index_file", type=click.Path(exists=True), required=True)
@click.option("--query", required=True)
@click.option("--k", default=20, show_default=True)
def index_search(index_file, query, k):
    loaded = retriever_mod.load_index(index_file)
    ranked = retriever_mod.search(loaded, query, k)
    for rank, (chunk_id, score) in enumerate(ranked.hits, start=1):
        click.echo(f"{rank:3d}. {chunk_id}  {score:.6f}")


@main.command("gen-queries")
@click.option("--templates", "templates_file", type=click.Path(exists=True), default=None,
              help="Template file; defaults to the built-in analysis templates.")
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--n", default=10, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--llm", "llm_backend", default=None)
@click.option("--train-fraction", default=0.8, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def gen_queries(ctx, templates_file, corpus_file, n, seed, llm_backend, train_fraction, out):
    """Generate synthetic queries by filling templates with corpus metadata."""
    templates = (
        synthqgen.load_templates(templates_file)
        if templates_file
        else synthqgen.default_templates()
    )
    loaded = corpus_mod.ingest(corpus_file)
    queries = synthqgen.generate_queries(
        templates,
        loaded,
        llm_backend or _default_backend(ctx),
        n=n,
        seed=_default_seed(ctx) if seed is None else seed,
        train_fraction=train_fraction,
    )
    synthqgen.write_generated_queries(queries, out)
    failed = sum(1 for q in queries if q.error)
    click.echo(f"wrote {len(queries)} queries to {out}" + (f" ({failed} failed)" if failed else ""))


@main.command("screen-queries")
@click.option("--queries", "queries_file", type=click.Path(exists=True), required=True)
@click.option("--decisions", "decisions_file", type=click.Path(exists=True), required=True)
@click.option("--out", type=click.Path(), required=True)
def screen_queries_cmd(queries_file, decisions_file, out):
    """Apply human keep/discard decisions to a generated-query file."""
    queries = synthqgen.load_generated_queries(queries_file)
    kept = synthqgen.screen_queries(queries, decisions_file)
    synthqgen.write_generated_queries(kept, out)
    click.echo(f"kept {len(kept)} of {len(queries)} queries")


@main.group()
def tasks():
    """Create annotation task batches."""


@tasks.command("relevance")
@click.option("--queries", "queries_file", type=click.Path(exists=True), required=True,
              help="Records with query_id and query fields.")
@click.option("--index", "index_file", type=click.Path(exists=True), required=True)
@click.option("--depth", type=click.Choice(["20", "50"]), default="20", show_default=True)
@click.option("--state-dir", default=None)
@click.pass_context
def tasks_relevance(ctx, queries_file, index_file, depth, state_dir):
    from .records import load_records

    store = annotation.AnnotationStore(state_dir or _default_state_dir(ctx))
    loaded_index = retriever_mod.load_index(index_file)
    queries = [(str(r["query_id"]), str(r["query"])) for r in load_records(queries_file)]
    created = store.create_relevance_tasks(queries, loaded_index, depth=int(depth))
    click.echo(f"{len(created)} relevance tasks ready (depth {depth})")


@tasks.command("preference")
@click.option("--questions", "questions_file", type=click.Path(exists=True), required=True,
              help="Records with question_id, question, document_text fields.")
@click.option("--llm", "llm_backend", default=None)
@click.option("--state-dir", default=None)
@click.pass_context
def tasks_preference(ctx, questions_file, llm_backend, state_dir):
    from .records import load_records

    store = annotation.AnnotationStore(state_dir or _default_state_dir(ctx))
    questions = load_records(questions_file)
    created = store.create_preference_tasks(questions, llm_backend or _default_backend(ctx))
    failed = sum(1 for t in created if t.failed)
    click.echo(f"{len(created)} preference tasks ready" + (f" ({failed} failed)" if failed else ""))


@main.command()
@click.option("--state-dir", default=None)
@click.option("--index", "index_file", type=click.Path(exists=True), default=None)
@click.option("--llm", "llm_backend", default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True)
@click.pass_context
def serve(ctx, state_dir, index_file, llm_backend, host, port):
    """Run the annotation/query HTTP service."""
    import uvicorn

    from .service import create_app

    store = annotation.AnnotationStore(state_dir or _default_state_dir(ctx))
    loaded_index = retriever_mod.load_index(index_file) if index_file else None
    app = create_app(
        store,
        index=loaded_index,
        llm_backend=llm_backend or _default_backend(ctx),
        char_budget=_default_budget(ctx),
    )
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--state-dir", default=None)
@click.option("--kind", type=click.Choice(["labeled-queries", "preferences", "qrels"]),
              required=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def export(ctx, state_dir, kind, out):
    """Write training/evaluation files from recorded labels."""
    store = annotation.AnnotationStore(state_dir or _default_state_dir(ctx))
    writer = {
        "labeled-queries": store.export_labeled_queries,
        "preferences": store.export_preferences,
        "qrels": store.export_qrels,
    }[kind]
    count = writer(out)
    click.echo(f"wrote {count} records to {out}")


@main.command("train-retriever")
@click.option("--labeled", "labeled_file", type=click.Path(exists=True), required=True)
@click.option("--corpus", "corpus_file", type=click.Path(exists=True), required=True)
@click.option("--strategy", type=click.Choice(["labeled", "mined", "mixed"]), default="labeled",
              show_default=True)
@click.option("--mined-count", default=10, show_default=True)
@click.option("--tau", default=1.0, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--epochs", default=1, show_default=True)
@click.option("--batch", "batch_size", default=16, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--init-params", "init_params_file", type=click.Path(exists=True), default=None)
@click.option("--dump-triples", type=click.Path(), default=None,
              help="Also write the expanded training triples to this file.")
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def train_retriever(ctx, labeled_file, corpus_file, strategy, mined_count, tau, lr, epochs,
                    batch_size, seed, init_params_file, dump_triples, out):
    """Contrastive fine-tuning of the encoder on labeled queries."""
    labeled = contrastive.load_labeled_queries(labeled_file)
    loaded = corpus_mod.ingest(corpus_file)
    cfg = contrastive.ContrastiveConfig(
        tau=tau,
        lr=lr,
        epochs=epochs,
        batch_size=batch_size,
        seed=_default_seed(ctx) if seed is None else seed,
        strategy=contrastive.NegativeStrategy(strategy, mined_count=mined_count),
    )
    initial = EncoderParams.load(init_params_file) if init_params_file else None
    if dump_triples:
        base = initial if initial is not None else EncoderParams.initialize(hash_seed=cfg.seed)
        mining_index = (
            retriever_mod.build_index(loaded, base) if cfg.strategy.uses_mining else None
        )
        triples, _ = contrastive.expand_triples(labeled, cfg.strategy, mining_index)
        contrastive.write_triples(triples, dump_triples)
        click.echo(f"wrote {len(triples)} triples to {dump_triples}")
    params, log = contrastive.train(labeled, loaded, cfg, initial_params=initial)
    params.save(out)
    click.echo(f"trained on {log.triple_count} triples ({len(log.skipped_queries)} queries skipped)")
    for epoch, loss in enumerate(log.epoch_losses, start=1):
        click.echo(f"epoch {epoch}: mean loss {loss:.6f}")
    click.echo(f"wrote encoder params to {out}")


def _parse_lr(value: str) -> float:
    if value in dpo_mod.LR_PRESETS:
        return dpo_mod.LR_PRESETS[value]
    return float(value)


@main.command("train-dpo")
@click.option("--pairs", "pairs_file", type=click.Path(exists=True), required=True)
@click.option("--beta", default=0.1, show_default=True)
@click.option("--lr", default="desk", show_default=True,
              help="Learning rate: a float, or 'desk' / 'full-scale' presets.")
@click.option("--epochs", default=1, show_default=True)
@click.option("--batch", "batch_size", default=2, show_default=True)
@click.option("--accum", "grad_accum_steps", default=8, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def train_dpo_cmd(ctx, pairs_file, beta, lr, epochs, batch_size, grad_accum_steps, seed, out):
    """Align the desk-scale policy model on preference pairs."""
    pairs = dpo_mod.load_preference_pairs(pairs_file)
    cfg = dpo_mod.DpoConfig(
        beta=beta,
        lr=_parse_lr(lr),
        epochs=epochs,
        batch_size=batch_size,
        grad_accum_steps=grad_accum_steps,
        seed=_default_seed(ctx) if seed is None else seed,
    )
    params, log = dpo_mod.train_dpo(pairs, cfg)
    params.save(out)
    click.echo(f"trained on {log.pair_count} pairs, {log.update_count} updates")
    for epoch, epoch_stats in enumerate(log.epochs, start=1):
        click.echo(
            f"epoch {epoch}: mean loss {epoch_stats.mean_loss:.6f}, "
            f"mean margin {epoch_stats.mean_margin:.6f}"
        )
    click.echo(f"wrote policy params to {out}")


@main.command("eval-retriever")
@click.option("--run", "run_file", type=click.Path(exists=True), default=None)
@click.option("--index", "index_file", type=click.Path(exists=True), default=None,
              help="Generate the run from the qrels query texts instead of --run.")
@click.option("--qrels", "qrels_file", type=click.Path(exists=True), required=True)
@click.option("--k", "ks", default="5,10,20", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--save-run", type=click.Path(), default=None)
def eval_retriever(run_file, index_file, qrels_file, ks, as_json, save_run):
    """Score a retrieval run with MRR, Recall@k, and MAP@k."""
    qrels, texts = evalsuite.load_qrels(qrels_file)
    k_values = [int(k) for k in ks.split(",") if k]
    if run_file:
        run = evalsuite.load_run(run_file)
    elif index_file:
        loaded_index = retriever_mod.load_index(index_file)
        max_k = max(k_values)
        run = evalsuite.RetrievalRun(
            rankings={
                query_id: tuple(retriever_mod.search(loaded_index, text, max_k).chunk_ids())
                for query_id, text in texts.items()
            }
        )
        if save_run:
            evalsuite.write_run(run, save_run)
    else:
        raise click.UsageError("one of --run or --index is required")
    report = evalsuite.evaluate_run(run, qrels, ks=k_values)
    click.echo(json.dumps(report.to_dict(), indent=2) if as_json else evalsuite.render_report(report))


@main.command("eval-rag")
@click.option("--questions", "questions_file", type=click.Path(exists=True), required=True,
              help="Records with question_id, question, and optional reference_answer.")
@click.option("--index", "index_file", type=click.Path(exists=True), required=True)
@click.option("--judge", "judge_locator", default="mock", show_default=True)
@click.option("--llm", "llm_backend", default=None)
@click.option("--k", default=20, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Write per-question results as JSONL.")
@click.pass_context
def eval_rag(ctx, questions_file, index_file, judge_locator, llm_backend, k, out):
    """Answer evaluation questions end to end and judge the generations."""
    from .records import load_records, write_records

    loaded_index = retriever_mod.load_index(index_file)
    backend = llm_backend or _default_backend(ctx)
    judge = evalsuite.make_judge(judge_locator)
    rows = []
    for record in load_records(questions_file):
        question = str(record["question"])
        grounded = pipeline.answer(loaded_index, question, backend, k=k,
                                   char_budget=_default_budget(ctx))
        contexts = [
            loaded_index.entries[chunk_id].rendered_text
            for chunk_id in grounded.retrieval.chunk_ids()
        ]
        row = {
            "question_id": record.get("question_id"),
            "question": question,
            "answer": grounded.answer_text,
            "cited_chunk_ids": list(grounded.cited_chunk_ids),
            "faithfulness": evalsuite.faithfulness(grounded.answer_text, contexts, judge),
        }
        reference = record.get("reference_answer")
        if reference:
            relevancy, accuracy = evalsuite.answer_scores(
                question, grounded.answer_text, str(reference), judge
            )
            row["relevancy"] = relevancy
            row["accuracy"] = accuracy
        rows.append(row)

    def mean_of(key: str) -> float | None:
        values = [r[key] for r in rows if key in r]
        return sum(values) / len(values) if values else None

    click.echo(f"questions: {len(rows)}")
    for metric in ("faithfulness", "relevancy", "accuracy"):
        value = mean_of(metric)
        if value is not None:
            click.echo(f"{metric}: {value:.6f}")
    if out:
        write_records(out, rows, header="policyrag rag eval v1")
        click.echo(f"wrote per-question results to {out}")


if __name__ == "__main__":
    main(prog_name="policyrag")
