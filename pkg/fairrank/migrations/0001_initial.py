# Generated by Django 4.2.24 on 2026-10-19 09:12

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
                ('run_dir', models.CharField(max_length=1024)),
                ('kind', models.CharField(choices=[('experiment', 'Experiment'), ('sweep', 'Sweep')], default='experiment', max_length=20)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='running', max_length=20)),
                ('stage', models.CharField(blank=True, max_length=50, null=True)),
                ('error', models.TextField(blank=True, max_length=5000, null=True)),
                ('config', models.JSONField(default=dict)),
                ('dataset_hash', models.CharField(blank=True, max_length=64)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'indexes': [models.Index(fields=['status'], name='fairrank_run_status_idx'), models.Index(fields=['-created_at'], name='fairrank_run_created_idx')],
            },
        ),
    ]
