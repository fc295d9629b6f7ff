"""treeduce: desk-scale columnar event-data reduction toolkit.

Subpackages and modules:

* ``treefile`` -- reader/writer for the TreeFile v1 basket-organized container
* ``exprlang`` -- expression language for skim predicates and derived columns
* ``xrdlite``  -- byte-range file protocol (server, client, prefetching connector)
* ``engine``   -- task planner and worker pool running skim/slim/derive jobs
* ``histagg``  -- composable, mergeable histogram aggregators
* ``bench``    -- synthetic dataset generator and scaling experiments
"""

__version__ = "0.1.0"
