from __future__ import annotations

import unittest

from warmslice.errors import InvalidInputError
from warmslice.rng import MAX_SEED, replication_seeds, seeded_generator


class SeededGeneratorTests(unittest.TestCase):
    def test_same_seed_gives_the_same_stream(self) -> None:
        first = seeded_generator(7)
        second = seeded_generator(7)

        self.assertEqual(
            [first.random() for _ in range(5)], [second.random() for _ in range(5)]
        )

    def test_draw_index_counts_every_draw(self) -> None:
        generator = seeded_generator(1)

        self.assertEqual(generator.random()[1], 0)
        generator.exponential(10.0)
        generator.random_batch(3)
        self.assertEqual(generator.random()[1], 5)
        self.assertEqual(generator.draws, 6)

    def test_spawned_streams_are_independent_of_each_other(self) -> None:
        arrivals, resizes = seeded_generator(42).spawn(2)

        self.assertNotEqual(arrivals.random()[0], resizes.random()[0])

    def test_spawned_streams_do_not_depend_on_parent_draws(self) -> None:
        parent = seeded_generator(42)
        parent.random()
        used = parent.spawn(1)[0]
        fresh = seeded_generator(42).spawn(1)[0]

        self.assertEqual(used.random(), fresh.random())

    def test_seed_must_fit_in_sixty_four_bits(self) -> None:
        seeded_generator(MAX_SEED)
        for seed in (-1, MAX_SEED + 1, 1.5, False):
            with self.subTest(seed=seed), self.assertRaises(InvalidInputError):
                seeded_generator(seed)


class ReplicationSeedTests(unittest.TestCase):
    def test_first_replication_uses_the_scenario_seed(self) -> None:
        seeds = replication_seeds(42, 3)

        self.assertEqual(seeds[0], 42)
        self.assertEqual(len(set(seeds)), 3)
        self.assertEqual(seeds, replication_seeds(42, 3))

    def test_count_must_be_positive(self) -> None:
        self.assertEqual(replication_seeds(5, 1), [5])
        with self.assertRaises(InvalidInputError):
            replication_seeds(5, 0)


if __name__ == "__main__":
    unittest.main()
