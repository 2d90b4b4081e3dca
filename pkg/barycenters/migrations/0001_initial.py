# Generated by Django 4.2.7 on 2026-10-18 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('subcommand', models.CharField(help_text='msb subcommand (e.g., rate-cost)', max_length=30)),
                ('config_hash', models.CharField(blank=True, help_text='SHA-256 of the canonical config', max_length=64)),
                ('seed', models.PositiveBigIntegerField(default=0, help_text='Master seed of the run')),
                ('version', models.CharField(help_text='Artifact version (e.g., 1.0.0 or dev-1a2b3c4)', max_length=40)),
                ('output_dir', models.CharField(help_text='Directory the result files were written to', max_length=500)),
                ('exit_code', models.IntegerField(default=0, help_text='Process exit code of the run')),
                ('wall_time', models.FloatField(default=0.0, help_text='Wall-clock seconds')),
                ('last_run', models.DateTimeField(auto_now=True, help_text='Last time this entry was updated')),
                ('created_at', models.DateTimeField(auto_now_add=True, help_text='Time the run started')),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'db_table': 'experiment_runs',
                'ordering': ['-created_at'],
            },
        ),
    ]
