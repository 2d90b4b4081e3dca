from django.db import models


class ExperimentRun(models.Model):
    """Ledger entry for one run of the msb command"""
    subcommand = models.CharField(
        max_length=30,
        help_text='msb subcommand (e.g., rate-cost)'
    )
    config_hash = models.CharField(
        max_length=64,
        blank=True,
        help_text='SHA-256 of the canonical config'
    )
    seed = models.PositiveBigIntegerField(
        default=0,
        help_text='Master seed of the run'
    )
    version = models.CharField(
        max_length=40,
        help_text='Artifact version (e.g., 1.0.0 or dev-1a2b3c4)'
    )
    output_dir = models.CharField(
        max_length=500,
        help_text='Directory the result files were written to'
    )
    exit_code = models.IntegerField(
        default=0,
        help_text='Process exit code of the run'
    )
    wall_time = models.FloatField(
        default=0.0,
        help_text='Wall-clock seconds'
    )
    last_run = models.DateTimeField(
        auto_now=True,
        help_text='Last time this entry was updated'
    )
    created_at = models.DateTimeField(
        auto_now_add=True,
        help_text='Time the run started'
    )

    class Meta:
        db_table = 'experiment_runs'
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.subcommand} [{self.config_hash[:12]}] exit {self.exit_code}"
