"""Orchestration shared by the command line and the HTTP routes."""
import logging
from dataclasses import replace
from functools import cached_property
from pathlib import Path

from app.config import settings
from app.errors import NoPerronRootError, PresentationValueError
from app.models import schemas
from app.services import stats as stats_service
from app.services.cwg import build_cwg, perron
from app.services.garside import (
    GarsideStructure,
    charney_graph,
    check_axioms,
    compute_garside,
    lr_sets,
    normal_form,
)
from app.services.measures import (
    Valuation,
    boundary_chain,
    normalize_to_mobius,
    sample_boundary_prefixes,
    speedup,
    uniform_measure,
)
from app.services.mobius import MobiusService, smallest_root_p0
from app.services.presentation import (
    MonoidPresentation,
    is_irreducible,
    load_presentation,
    parse_family,
    parse_presentation,
)
from app.services.words import WordService

logger = logging.getLogger(__name__)


def resolve_presentation(
    spec: str | None = None,
    family: str | None = None,
    path: str | Path | None = None,
    name: str | None = None,
) -> MonoidPresentation:
    """
    Exactly one of spec text, family string or spec file.

    Raises:
        PresentationValueError: none or several sources given.
    """
    given = [x for x in (spec, family, path) if x is not None]
    if len(given) != 1:
        raise PresentationValueError("give exactly one of a spec file, spec text or --family")
    if path is not None:
        return load_presentation(path)
    if family is not None:
        return parse_family(family)
    p = parse_presentation(spec)
    return replace(p, name=name) if name else p


class MonoidAnalysis:
    """One presentation with its lazily built word service, Garside structure and Möbius data."""

    def __init__(
        self,
        presentation: MonoidPresentation,
        class_length_cap: int | None = None,
        garside_cap: int | None = None,
    ):
        self.presentation = presentation
        self.words = WordService(presentation, class_length_cap)
        self.garside_cap = garside_cap

    @classmethod
    def from_request(cls, request: schemas.MonoidRequest) -> "MonoidAnalysis":
        p = resolve_presentation(spec=request.spec, family=request.family)
        return cls(p, request.class_length_cap, request.garside_cap)

    @property
    def label(self) -> str:
        return self.presentation.name or "monoid"

    @cached_property
    def g(self) -> GarsideStructure:
        return compute_garside(self.presentation, self.garside_cap, self.words)

    @cached_property
    def mobius(self) -> MobiusService:
        return MobiusService(self.g)

    def valuation(self, text: str | None) -> Valuation:
        return Valuation.parse(self.presentation, text) if text else Valuation.uniform(self.presentation)

    def analyze(self) -> schemas.AnalysisReport:
        p, g = self.presentation, self.g
        irreducible = is_irreducible(p)
        notes: list[str] = []
        charney = charney_graph(g).strongly_connected if irreducible.irreducible else None
        mu = self.mobius.mobius_polynomial()
        p0 = lam = kappa = None
        case = K = None
        try:
            p0 = smallest_root_p0(mu)
        except NoPerronRootError as exc:
            notes.append(exc.message)
        if irreducible.irreducible and p.rank >= 2:
            pd = perron(build_cwg(g))
            lam, case, K = pd.lam, pd.case, pd.K
            kappa = speedup(uniform_measure(g, self.mobius))
        else:
            notes.append("reducible or single generator: spectral and boundary data skipped")
        axioms = check_axioms(g)
        return schemas.AnalysisReport(
            monoid=self.label,
            generators=list(p.generators),
            simples=len(g),
            spherical=g.is_spherical,
            delta=g.format(g.delta) if g.delta is not None else None,
            fc=g.is_fc,
            irreducible=irreducible.irreducible,
            components=[list(c) for c in irreducible.components],
            charney_strongly_connected=charney,
            mobius_polynomial=mu.format(),
            p0=p0,
            lam=lam,
            perron_case=case,
            K=K,
            kappa=kappa,
            axioms=schemas.AxiomReport(
                passed=axioms.passed,
                checks=[schemas.AxiomCheck.model_validate(c) for c in axioms.checks],
                notes=list(axioms.notes),
            ),
            notes=notes,
        )

    def normal_form(self, word: str) -> schemas.NormalFormResponse:
        g = self.g
        w = self.presentation.parse_word(word)
        x = normal_form(g, w)
        return schemas.NormalFormResponse(
            word=self.presentation.format_word(w),
            blocks=[g.format(i) for i in x.normal],
            normal_form=g.format_element(x),
            height=0 if x.is_unit else x.height,
            length=x.length,
        )

    def garside_dump(self) -> schemas.GarsideDump:
        g = self.g
        simples = []
        for i in range(len(g)):
            sets = lr_sets(g, i)
            simples.append(schemas.SimpleInfo(
                index=i,
                word=g.format(i),
                length=int(g.lengths[i]),
                left=sorted(sets.left),
                right=sorted(sets.right),
                letters=sorted(sets.letters),
                d_set=[g.format_element(d) for d in self.mobius.d_set(i)],
            ))
        irreducible = is_irreducible(self.presentation).irreducible
        return schemas.GarsideDump(
            monoid=self.label,
            simples=simples,
            delta=g.format(g.delta) if g.delta is not None else None,
            fc=g.is_fc,
            arrows=g.arrow.astype(int).tolist(),
            charney_strongly_connected=charney_graph(g).strongly_connected if irreducible else None,
        )

    def matrix_dump(self, valuation: str | None = None) -> str:
        return build_cwg(self.g, self.valuation(valuation) if valuation else None).to_coordinate_text()

    def mobius_report(self, valuation: str | None = None, k_max: int = 10) -> schemas.MobiusReport:
        omega = self.valuation(valuation) if valuation else None
        mu = self.mobius.mobius_polynomial(omega)
        over_simples = self.mobius.mobius_polynomial(omega, subsets="S")
        p0 = None
        try:
            p0 = smallest_root_p0(mu)
        except NoPerronRootError:
            logger.info("no Perron root for %s", mu.format())
        growth = self.mobius.growth_coefficients(omega, k_max)
        return schemas.MobiusReport(
            monoid=self.label,
            valuation=omega.format() if omega else None,
            polynomial=mu.format(),
            coefficients=[str(c) for c in mu.coefficients],
            polynomial_over_simples=over_simples.format(),
            p0=p0,
            growth=[str(z) for z in growth],
        )

    def measure(
        self,
        valuation: str | None,
        prefix: int,
        count: int,
        seed: int | None = None,
        threads: int | None = None,
    ) -> schemas.MeasureSample:
        """Boundary prefixes under the uniform measure, or under the normalisation of ω."""
        g = self.g
        seed = settings.SEED if seed is None else seed
        if valuation:
            f = normalize_to_mobius(g, self.valuation(valuation))
            bc = boundary_chain(g, f, self.mobius)
        else:
            bc = uniform_measure(g, self.mobius)
        prefixes = sample_boundary_prefixes(bc, prefix, count, seed, threads)
        return schemas.MeasureSample(
            monoid=self.label,
            valuation=bc.f.format(),
            kappa=bc.kappa,
            seed=seed,
            prefixes=[g.format_element(g.element(blocks)) for blocks in prefixes],
        )

    def sample(
        self,
        k: int,
        count: int,
        valuation: str | None = None,
        seed: int | None = None,
        threads: int | None = None,
    ) -> list[str]:
        g = self.g
        seed = settings.SEED if seed is None else seed
        omega = self.valuation(valuation) if valuation else None
        c = build_cwg(g, omega)
        return [g.format_element(x) for x in stats_service.sample_exact(g, c, k, count, seed, threads)]

    def experiment(
        self,
        k: int,
        count: int,
        statistic: str = "height",
        valuation: str | None = None,
        seed: int | None = None,
        threads: int | None = None,
    ) -> tuple[stats_service.Experiment, schemas.ExperimentReport, schemas.DeltaMethodReport | None]:
        g = self.g
        seed = settings.SEED if seed is None else seed
        stat = stats_service.statistic_by_name(g, statistic)
        omega = self.valuation(valuation) if valuation else None
        experiment = stats_service.concentration_experiment(g, omega, stat, k, count, seed, threads)
        report = schemas.ExperimentReport.model_validate(experiment.report)
        delta = None
        if stat.name == "height":
            delta = schemas.DeltaMethodReport.model_validate(stats_service.delta_method_check(experiment))
        return experiment, report, delta
