from typing import Optional

from src.hashkit.dsdh.config import RunConfig
from src.hashkit.dsdh.services.data import DataService
from src.hashkit.dsdh.services.encoder import EncoderService
from src.hashkit.dsdh.services.evaluation import EvaluationService
from src.hashkit.dsdh.services.retrieval import RetrievalService
from src.hashkit.dsdh.services.solver import SolverService, Variant


class Client:
    def __init__(self, config: Optional[RunConfig] = None) -> None:
        """
        Initialize the hashing Client.

        Args:
            config (Optional[RunConfig]): Run configuration; defaults when None.
        """
        self.config = config or RunConfig()

    def data(self) -> DataService:
        """
        Return an instance of the DataService class.

        Returns:
            DataService: Dataset loading and splitting with the run's format and seed.
        """
        return DataService(format=self.config.format, seed=self.config.seed)

    def encoder(self) -> EncoderService:
        """
        Return an instance of the EncoderService class.

        Returns:
            EncoderService: Encoder construction with the run's layer shape.
        """
        return EncoderService(
            hidden=self.config.hidden,
            bits=self.config.bits,
            activation=self.config.activation,
        )

    def solver(self) -> SolverService:
        """
        Return an instance of the SolverService class.

        Returns:
            SolverService: Training with the run's hyperparameters and schedule.
        """
        return SolverService(
            hp=self.config.hyperparams(),
            schedule=self.config.schedule(),
            variant=Variant(self.config.variant),
            hidden=self.config.hidden,
            activation=self.config.activation,
            standardize=self.config.standardize,
            seed=self.config.seed,
        )

    def retrieval(self) -> RetrievalService:
        """
        Return an instance of the RetrievalService class.

        Returns:
            RetrievalService: Hamming ranking with the run's worker cap.
        """
        return RetrievalService(threads=self.config.threads)

    def evaluation(
        self, truncate: Optional[int] = None, radius: int = 2
    ) -> EvaluationService:
        """
        Return an instance of the EvaluationService class.

        Args:
            truncate (Optional[int]): AP cut-off.
            radius (int): Hamming radius for the radius precision.

        Returns:
            EvaluationService: Retrieval metrics with the run's worker cap.
        """
        return EvaluationService(truncate=truncate, radius=radius, threads=self.config.threads)
