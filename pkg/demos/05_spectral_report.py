"""Spectral overlap report: does the box filter actually separate the bands?

Each latent is factorized, both bands get a radially binned Fourier energy
spectrum (unit mass, bin 1 holds DC), and the overlap is the summed bandwise
minimum of the two spectra. Near 0 means the smoothing cleanly splits the
signal; near 1 means both bands carry the same frequencies. The report
aggregates the whole cache and notes skipped all-zero bands.
"""

import numpy as np

from bandprompt.bands import factorize
from bandprompt.diagnostics import band_overlap, diagnose, format_report, radial_spectrum
from bandprompt.teacher import SyntheticSpec, generate_dataset


def main() -> None:
    # one latent end to end
    cache = generate_dataset(SyntheticSpec(num_classes=4, identity_band="low", seed=2),
                             n_per_class=8)
    z = cache.records[0].latent.data
    pair = factorize(z, 7)
    sp_base = radial_spectrum(pair.base, num_bins=10)
    sp_detail = radial_spectrum(pair.detail, num_bins=10)
    print("base   spectrum:", np.array2string(sp_base.energies, precision=3, suppress_small=True))
    print("detail spectrum:", np.array2string(sp_detail.energies, precision=3, suppress_small=True))
    print(f"overlap(base, detail) = {band_overlap(sp_base, sp_detail):.4f}, "
          f"self-overlap = {band_overlap(sp_base, sp_base):.4f}")

    # ------------------------------------------------------------------
    # whole-cache report for both generator settings, aligned to a 14x14 grid
    for band in ("low", "high"):
        spec = SyntheticSpec(num_classes=8, identity_band=band, noise_std=0.0, seed=0)
        report = diagnose(generate_dataset(spec, n_per_class=16),
                          kernel=7, num_bins=10, align=(14, 14))
        print(f"\nidentity_band={band}: overlap {report.overlap_mean:.4f} "
              f"+/- {report.overlap_std:.4f} over {report.samples} samples "
              f"({report.skipped_count} skipped)")

    print("\nfull report text (identity_band=high, first lines):")
    print("\n".join(format_report(report).splitlines()[:8]))


if __name__ == "__main__":
    main()
