"""FastAPI application wrapping the experiment runners.

The service is synchronous by design: training requests block until the
run finishes and files are on disk, which keeps results reproducible and
lets the thin command-line client map HTTP errors straight to exit codes.
"""

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import experiments
from ..ctae import CtaeConfig
from ..errors import LtcError, MissingCheckpoint, MissingFile
from ..train import TrainConfig
from .schemas import (
    BaselineRequest,
    ClusterRequest,
    ClusterResponse,
    LifelongRequest,
    LifelongResponse,
    LifelongStepModel,
    PoolEntryInfo,
    PoolExportRequest,
    PoolExportResponse,
    PoolListResponse,
    ResultRowModel,
)


def _train_config(settings, seed):
    return TrainConfig(
        pretrain_epochs=settings.pretrain_epochs,
        train_epochs=settings.train_epochs,
        batch_size=settings.batch_size,
        lr=settings.lr,
        seed=seed,
    )


def _model_config(settings, seed):
    return CtaeConfig(
        conv_channels=settings.conv_channels,
        kernel_width=settings.kernel_width,
        lstm_hidden_1=settings.lstm_hidden_1,
        lstm_hidden_2=settings.lstm_hidden_2,
        activation=settings.activation,
        seed=seed,
    )


def _row_models(rows):
    return [ResultRowModel(**row.__dict__) for row in rows]


def create_app():
    app = FastAPI(title="ltc", description="lifelong temporal clustering service")

    @app.exception_handler(LtcError)
    async def _ltc_error(request: Request, exc: LtcError):
        status = 404 if isinstance(exc, (MissingFile, MissingCheckpoint)) else 400
        return JSONResponse(
            status_code=status, content={"detail": str(exc), "kind": exc.kind}
        )

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/cluster", response_model=ClusterResponse)
    def cluster(req: ClusterRequest):
        rows, results_csv, traces = experiments.run_cluster(
            data=req.data,
            k=req.k,
            out=req.out,
            fmt=req.format,
            labels_path=req.labels,
            seed=req.seed,
            repeats=req.repeats,
            do_normalize=req.normalize,
            train_cfg=_train_config(req.train, req.seed),
            model_cfg=_model_config(req.model, req.seed),
        )
        return ClusterResponse(
            rows=_row_models(rows), results_csv=results_csv, trace_csvs=traces
        )

    @app.post("/baseline", response_model=ClusterResponse)
    def baseline(req: BaselineRequest):
        rows, results_csv = experiments.run_baseline(
            data=req.data,
            k=req.k,
            out=req.out,
            fmt=req.format,
            labels_path=req.labels,
            seed=req.seed,
            repeats=req.repeats,
            do_normalize=req.normalize,
        )
        return ClusterResponse(rows=_row_models(rows), results_csv=results_csv)

    @app.post("/lifelong", response_model=LifelongResponse)
    def lifelong(req: LifelongRequest):
        ll = req.lifelong
        rows, csv_path, pool_dir = experiments.run_lifelong(
            data=req.data,
            k=ll.k,
            out=req.out,
            fmt=req.format,
            labels_path=req.labels,
            seed=req.seed,
            do_normalize=req.normalize,
            train_cfg=_train_config(req.train, req.seed),
            model_cfg=_model_config(req.model, req.seed),
            mode=ll.mode,
            class_groups=ll.class_groups,
            num_batches=ll.num_batches,
            batch_size=ll.batch_size,
            max_fraction=ll.max_fraction,
            new_class=ll.new_class,
            delta=ll.delta,
            refine_band=ll.refine_band,
            capacity=ll.capacity,
            replay_cap=ll.replay_cap,
            ablate_single_model=ll.ablate_single_model,
        )
        return LifelongResponse(
            rows=[LifelongStepModel(**r.__dict__) for r in rows],
            lifelong_csv=csv_path,
            pool_dir=pool_dir,
        )

    @app.get("/pool/entries", response_model=PoolListResponse)
    def pool_entries(checkpoint: str):
        infos = experiments.pool_list(checkpoint)
        return PoolListResponse(
            checkpoint=checkpoint, entries=[PoolEntryInfo(**i) for i in infos]
        )

    @app.get("/pool/entries/{entry_id}")
    def pool_entry(entry_id: int, checkpoint: str):
        return experiments.pool_inspect(checkpoint, entry_id)

    @app.post("/pool/export", response_model=PoolExportResponse)
    def pool_export(req: PoolExportRequest):
        from ..lifelong import export_pool

        dest = export_pool(req.checkpoint, req.dest)
        return PoolExportResponse(checkpoint=req.checkpoint, dest=str(dest))

    return app


app = create_app()
