from typing import Iterator

import pytest

from src.hashkit.dsdh.client import Client
from src.hashkit.dsdh.config import RunConfig
from src.hashkit.dsdh.services.data import DataService
from src.hashkit.dsdh.services.encoder import EncoderService
from src.hashkit.dsdh.services.evaluation import EvaluationService
from src.hashkit.dsdh.services.retrieval import RetrievalService
from src.hashkit.dsdh.services.solver import SolverService, Variant


@pytest.fixture
def client() -> Iterator[Client]:
    """
    Fixture that initializes and returns a Client with a non-default configuration.

    Yields:
        Client: A client for a 16-bit pairwise-only run.
    """
    yield Client(RunConfig(bits=16, variant="A", seed=9, threads=2, format="binary"))


def test_client_default_configuration() -> None:
    """
    Test to verify the Client falls back to the default configuration.
    """
    assert Client().config == RunConfig()


def test_data_service(client: Client) -> None:
    """
    Test to verify the DataService instantiation.

    Args:
        client (Client): The Client instance initialized with the fixture.
    """
    service: DataService = client.data()
    assert isinstance(service, DataService)
    assert service.format == "binary"
    assert service.seed == 9


def test_encoder_service(client: Client) -> None:
    service: EncoderService = client.encoder()
    assert isinstance(service, EncoderService)
    assert service.shape(10) == [10, 64, 64, 16]


def test_solver_service(client: Client) -> None:
    service: SolverService = client.solver()
    assert isinstance(service, SolverService)
    assert service.variant is Variant.A
    assert service.hp.K == 16
    assert service.seed == 9


def test_retrieval_service(client: Client) -> None:
    service: RetrievalService = client.retrieval()
    assert isinstance(service, RetrievalService)
    assert service.threads == 2


def test_evaluation_service(client: Client) -> None:
    service: EvaluationService = client.evaluation(truncate=100, radius=3)
    assert isinstance(service, EvaluationService)
    assert (service.truncate, service.radius, service.threads) == (100, 3, 2)
